"""Slot-by-slot repetition of the pricing game over a peak-hour horizon.

Each slot has its own available energy C_t and PEVG parameters; the
game within a slot is the static one.  The state transition is either an
independent uniform draw around configured means or an explicit schedule.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from evcharge.model import GridParams, PevgParams, Scenario
from evcharge.stackelberg import GseOutcome, gse_solve
from evcharge.vi import SolverConfig


@dataclass(frozen=True)
class SlotState:
    t: int
    capacity: float
    pevgs: tuple[PevgParams, ...]

    def __post_init__(self):
        if not self.capacity > 0:
            raise ValueError(f"slot {self.t}: capacity must be > 0, got {self.capacity}")
        object.__setattr__(self, "pevgs", tuple(self.pevgs))

    def scenario(self, price: float, seed: int = 0) -> Scenario:
        return Scenario(GridParams(self.capacity, price), self.pevgs, seed)


@dataclass(frozen=True)
class TransitionConfig:
    mode: str = "iid-uniform"
    mean_capacity: float = 66.0
    mean_battery: float = 55.0 / 1.5
    range_factor: tuple[float, float] = (0.5, 1.5)
    battery_bounds: tuple[float, float] = (9.9, 55.0)
    satisfaction_range: tuple[float, float] = (1.0, 2.0)
    n_pevgs: int = 5
    initial_price: float = 17.0
    schedule: tuple[SlotState, ...] = ()
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("iid-uniform", "schedule"):
            raise ValueError(f"unknown transition mode {self.mode!r}")
        lo, hi = self.range_factor
        if not lo < hi:
            raise ValueError(f"range_factor must satisfy lo < hi, got {self.range_factor}")
        if not (self.mean_capacity > 0 and self.mean_battery > 0):
            raise ValueError("mean_capacity and mean_battery must be > 0")
        if self.n_pevgs < 1:
            raise ValueError("n_pevgs must be >= 1")
        if self.mode == "schedule":
            if not self.schedule:
                raise ValueError("schedule mode needs at least one slot")
            sizes = {len(slot.pevgs) for slot in self.schedule}
            if len(sizes) != 1:
                raise ValueError(f"schedule slots disagree on the number of PEVGs: {sorted(sizes)}")
        object.__setattr__(self, "schedule", tuple(self.schedule))


@dataclass
class HorizonResult:
    slots: list[GseOutcome]
    states: list[SlotState]
    leader_payoff: float
    follower_payoff: float
    per_slot_revenue: list[float] = field(default_factory=list)
    per_slot_utility: list[float] = field(default_factory=list)


def _draw_state(cfg: TransitionConfig, t: int, rng: np.random.Generator) -> SlotState:
    lo, hi = cfg.range_factor
    capacity = rng.uniform(lo * cfg.mean_capacity, hi * cfg.mean_capacity)
    b = rng.uniform(lo * cfg.mean_battery, hi * cfg.mean_battery, cfg.n_pevgs)
    b = np.clip(b, *cfg.battery_bounds)
    s = rng.uniform(*cfg.satisfaction_range, cfg.n_pevgs)
    return SlotState(t, float(capacity), tuple(PevgParams(float(bn), float(sn)) for bn, sn in zip(b, s)))


def initial_state(cfg: TransitionConfig, rng: np.random.Generator) -> SlotState:
    if cfg.mode == "schedule":
        return cfg.schedule[0]
    return _draw_state(cfg, 0, rng)


def state_transition(
    cfg: TransitionConfig,
    prev: SlotState,
    outcome: GseOutcome | None,
    rng: np.random.Generator | None = None,
) -> SlotState:
    """Next slot state from the previous state and its market outcome.

    Neither built-in mode uses ``outcome``: iid draws are independent of
    the past and a schedule is read verbatim.
    """
    t = prev.t + 1
    if cfg.mode == "schedule":
        if t >= len(cfg.schedule):
            raise IndexError(f"schedule exhausted at slot {t}")
        slot = cfg.schedule[t]
        return SlotState(t, slot.capacity, slot.pevgs)
    if rng is None:
        raise ValueError("iid-uniform transitions need a random generator")
    return _draw_state(cfg, t, rng)


class SlotFailure(RuntimeError):
    def __init__(self, t, cause):
        super().__init__(f"slot {t}: {cause}")
        self.t = t
        self.cause = cause


def _solve_slot(state: SlotState, price: float, solver_cfg: SolverConfig) -> GseOutcome:
    try:
        return gse_solve(state.scenario(price), solver_cfg)
    except Exception as exc:  # noqa: BLE001 - re-raised with the slot index
        raise SlotFailure(state.t, exc) from exc


def simulate_horizon(
    cfg: TransitionConfig,
    T: int,
    solver_cfg: SolverConfig | None = None,
    workers: int = 1,
) -> HorizonResult:
    """Run T slots and accumulate leader revenue and follower utility.

    With ``workers == 1`` slots are solved in order and each outcome is fed
    to the transition.  Otherwise all states are generated first (valid
    because neither mode reads the outcome) and slots are solved
    concurrently; results are identical either way.
    """
    if T < 1:
        raise ValueError("T must be >= 1")
    solver_cfg = solver_cfg or SolverConfig()
    rng = np.random.default_rng(cfg.seed)
    price = cfg.initial_price

    states = [initial_state(cfg, rng)]
    outcomes: list[GseOutcome] = []
    if workers <= 1:
        for t in range(T):
            outcomes.append(_solve_slot(states[-1], price, solver_cfg))
            if t + 1 < T:
                states.append(state_transition(cfg, states[-1], outcomes[-1], rng))
    else:
        for _ in range(T - 1):
            states.append(state_transition(cfg, states[-1], None, rng))
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(lambda st: _solve_slot(st, price, solver_cfg), states))

    revenue = [o.revenue for o in outcomes]
    utility = [o.joint_utility for o in outcomes]
    return HorizonResult(
        slots=outcomes,
        states=states,
        leader_payoff=float(sum(revenue)),
        follower_payoff=float(sum(utility)),
        per_slot_revenue=revenue,
        per_slot_utility=utility,
    )
