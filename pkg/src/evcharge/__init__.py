"""Grid-to-vehicle pricing game: follower equilibrium, leader pricing, baselines."""

from evcharge.model import GridParams, PevgParams, Scenario
from evcharge.vi import SolverConfig, VeSolution, ss_solve
from evcharge.stackelberg import GseOutcome, closed_form_gse, gse_solve
from evcharge.baselines import PsoConfig, ed_allocate, pso_allocate
from evcharge.dynamics import TransitionConfig, simulate_horizon

__all__ = [
    "GridParams",
    "PevgParams",
    "Scenario",
    "SolverConfig",
    "VeSolution",
    "ss_solve",
    "GseOutcome",
    "closed_form_gse",
    "gse_solve",
    "PsoConfig",
    "ed_allocate",
    "pso_allocate",
    "TransitionConfig",
    "simulate_horizon",
]
