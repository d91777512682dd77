"""Domain types and payoff evaluation shared by every solver.

Units: energy in MWh, price in USD/MWh.  A PEVG (group of plug-in
vehicles at one site) is one follower; the grid is the single leader.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

FEAS_TOL = 1e-9


@dataclass(frozen=True)
class PevgParams:
    b: float
    s: float
    x_ini: float = 0.0

    def __post_init__(self):
        if not self.b > 0:
            raise ValueError(f"b must be > 0, got {self.b}")
        if not self.s > 0:
            raise ValueError(f"s must be > 0, got {self.s}")
        if not 0 <= self.x_ini <= self.b:
            raise ValueError(f"x_ini must lie in [0, b={self.b}], got {self.x_ini}")


@dataclass(frozen=True)
class GridParams:
    capacity: float
    initial_price: float = 0.0

    def __post_init__(self):
        if not self.capacity > 0:
            raise ValueError(f"capacity must be > 0, got {self.capacity}")
        if not self.initial_price >= 0:
            raise ValueError(f"initial_price must be >= 0, got {self.initial_price}")


@dataclass(frozen=True)
class Scenario:
    grid: GridParams
    pevgs: tuple[PevgParams, ...]
    seed: int = 0
    # derived vectors, indexed like pevgs
    b: np.ndarray = field(init=False, repr=False, compare=False)
    s: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        pevgs = tuple(self.pevgs)
        if len(pevgs) < 1:
            raise ValueError("a scenario needs at least one PEVG")
        if self.seed < 0:
            raise ValueError(f"seed must be unsigned, got {self.seed}")
        object.__setattr__(self, "pevgs", pevgs)
        b = np.array([g.b for g in pevgs], dtype=float)
        s = np.array([g.s for g in pevgs], dtype=float)
        b.setflags(write=False)
        s.setflags(write=False)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "s", s)

    @classmethod
    def from_arrays(cls, b, s, capacity, initial_price=0.0, x_ini=None, seed=0):
        b = np.atleast_1d(np.asarray(b, dtype=float))
        s = np.atleast_1d(np.asarray(s, dtype=float))
        if b.shape != s.shape:
            raise ValueError(f"b and s lengths differ: {b.size} vs {s.size}")
        if x_ini is None:
            x_ini = np.zeros_like(b)
        pevgs = tuple(PevgParams(float(bn), float(sn), float(xn)) for bn, sn, xn in zip(b, s, x_ini))
        return cls(GridParams(float(capacity), float(initial_price)), pevgs, seed)

    @property
    def n(self) -> int:
        return len(self.pevgs)

    @property
    def capacity(self) -> float:
        return self.grid.capacity

    @property
    def x_ini(self) -> np.ndarray:
        return np.array([g.x_ini for g in self.pevgs], dtype=float)

    def with_capacity(self, capacity: float) -> "Scenario":
        return Scenario(GridParams(capacity, self.grid.initial_price), self.pevgs, self.seed)

    def with_price(self, initial_price: float) -> "Scenario":
        return Scenario(GridParams(self.grid.capacity, initial_price), self.pevgs, self.seed)


def _check_price(p):
    if p < 0:
        raise ValueError(f"price must be >= 0, got {p}")


def _as_alloc(scenario: Scenario, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (scenario.n,):
        raise ValueError(f"allocation has shape {x.shape}, scenario has {scenario.n} PEVGs")
    return x


def pevg_utility(params: PevgParams, x: float, p: float) -> float:
    """Follower payoff b*x - s*x^2/2 - p*x for demand ``x`` at price ``p``."""
    if x < 0:
        raise ValueError(f"demand must be >= 0, got {x}")
    _check_price(p)
    return params.b * x - 0.5 * params.s * x * x - p * x


def utilities(scenario: Scenario, x, p: float) -> np.ndarray:
    """Vector of per-PEVG payoffs (no sign check, used on solver output)."""
    x = _as_alloc(scenario, x)
    return scenario.b * x - 0.5 * scenario.s * x * x - p * x


def grid_revenue(p: float, x) -> float:
    _check_price(p)
    return float(p * np.sum(x))


def joint_utility(scenario: Scenario, x, p: float) -> float:
    """Sum of all follower payoffs; the potential the followers jointly maximise."""
    _check_price(p)
    return float(np.sum(utilities(scenario, x, p)))


def feasible(scenario: Scenario, x, tol: float = FEAS_TOL) -> bool:
    x = _as_alloc(scenario, x)
    return bool(np.all(x >= -tol) and x.sum() <= scenario.capacity + tol)


def capacity_condition(scenario: Scenario, x, p: float) -> bool:
    """True when sum(b) > p*N + sum(s*x), i.e. the game is not trivially uncongested."""
    x = _as_alloc(scenario, x)
    return bool(scenario.b.sum() > p * scenario.n + float(np.dot(scenario.s, x)))


def satiation(scenario: Scenario, p: float) -> np.ndarray:
    """Largest useful demand per PEVG at price ``p``.

    Beyond ``(b - p)/s`` marginal utility is negative; energy already in
    the battery (``x_ini``) lowers the cap further.
    """
    return np.maximum(0.0, (scenario.b - p) / scenario.s - scenario.x_ini)
