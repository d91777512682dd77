"""Comparison allocations at a fixed price: equal split and particle swarm."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from evcharge.model import Scenario, satiation
from evcharge.vi import project_feasible_rows


@dataclass(frozen=True)
class PsoConfig:
    particles: int = 40
    iterations: int = 200
    inertia: float = 0.72
    cognitive: float = 1.49
    social: float = 1.49
    seed: int = 0

    def __post_init__(self):
        if self.particles < 1 or self.iterations < 1:
            raise ValueError("particles and iterations must be >= 1")
        if min(self.inertia, self.cognitive, self.social) <= 0:
            raise ValueError("inertia, cognitive and social weights must be > 0")


@dataclass
class PsoRun:
    x: np.ndarray
    best_history: np.ndarray  # global-best joint utility after each iteration (index 0 = initial swarm)
    initial_values: np.ndarray  # joint utility of every particle in the initial swarm


def ed_allocate(scenario: Scenario, p: float, redistribute: bool = False) -> np.ndarray:
    """Each PEVG gets C/N, cut at the demand beyond which it gains nothing.

    With ``redistribute`` the energy refused by satiated PEVGs is split
    again among the others until nothing is left or everyone is satiated.
    """
    cap = satiation(scenario, p)
    C, n = scenario.capacity, scenario.n
    if not redistribute:
        return np.minimum(C / n, cap)
    x = np.zeros(n)
    left = C
    open_ = cap > 0
    while left > 1e-12 * C and open_.any():
        share = left / open_.sum()
        x[open_] = np.minimum(x[open_] + share, cap[open_])
        left = C - x.sum()
        open_ = x < cap
    return x


def _joint(scenario: Scenario, X: np.ndarray, p: float) -> np.ndarray:
    return (scenario.b * X - 0.5 * scenario.s * X**2 - p * X).sum(axis=1)


def initial_swarm(rng: np.random.Generator, n: int, C: float, particles: int) -> np.ndarray:
    # uniform over {x >= 0, sum(x) <= C}: drop the slack coordinate of a flat Dirichlet
    return rng.dirichlet(np.ones(n + 1), size=particles)[:, :n] * C


def run_pso(scenario: Scenario, p: float, cfg: PsoConfig | None = None) -> PsoRun:
    cfg = cfg or PsoConfig()
    rng = np.random.default_rng(cfg.seed)
    n, C = scenario.n, scenario.capacity
    pos = initial_swarm(rng, n, C, cfg.particles)
    vel = np.zeros_like(pos)
    val = _joint(scenario, pos, p)
    initial = val.copy()
    pbest, pbest_val = pos.copy(), val.copy()
    g = int(np.argmax(pbest_val))
    gbest, gbest_val = pbest[g].copy(), float(pbest_val[g])
    history = [gbest_val]
    for _ in range(cfg.iterations):
        r1 = rng.random(pos.shape)
        r2 = rng.random(pos.shape)
        vel = cfg.inertia * vel + cfg.cognitive * r1 * (pbest - pos) + cfg.social * r2 * (gbest - pos)
        pos = project_feasible_rows(pos + vel, C)
        val = _joint(scenario, pos, p)
        better = val > pbest_val
        pbest[better] = pos[better]
        pbest_val[better] = val[better]
        g = int(np.argmax(pbest_val))
        if pbest_val[g] > gbest_val:
            gbest, gbest_val = pbest[g].copy(), float(pbest_val[g])
        history.append(gbest_val)
    return PsoRun(x=gbest, best_history=np.array(history), initial_values=initial)


def pso_allocate(scenario: Scenario, p: float, cfg: PsoConfig | None = None) -> np.ndarray:
    """Global-best PSO on the joint utility; every particle is kept feasible by projection."""
    return run_pso(scenario, p, cfg).x
