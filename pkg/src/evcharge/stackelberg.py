"""Leader pricing on top of the followers' equilibrium.

``gse_solve`` is the distributed procedure: followers run the projection
method at the announced price, the coordinator reads the shared
multiplier, and the grid moves its price to b_n - s_n x_n (the level at
which the multiplier vanishes).  ``closed_form_gse`` reaches the same
point analytically by water-filling and is kept as an independent oracle.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from evcharge.model import Scenario, feasible, utilities
from evcharge.vi import INTERIOR_TOL, SolverConfig, VeSolution, ss_solve

LAMBDA_TOL = 1e-7
EQ_TOL = 1e-6
MAX_ROUNDS = 20


class DegenerateScenario(ValueError):
    pass


class ConsistencyError(RuntimeError):
    pass


@dataclass
class GseOutcome:
    x_star: np.ndarray
    p_star: float
    lam: float
    revenue: float
    utilities: np.ndarray
    iterations_total: int
    initial_lambda: float = 0.0  # shared multiplier at the opening price
    slack_at_open: bool = False  # capacity was not exhausted at the opening price
    phases: list[VeSolution] = field(default_factory=list, repr=False)

    @property
    def total_demand(self) -> float:
        return float(self.x_star.sum())

    @property
    def joint_utility(self) -> float:
        return float(self.utilities.sum())


def binding_price(scenario: Scenario) -> tuple[float, np.ndarray]:
    """Price at which aggregate satiation demand equals capacity.

    Active-set water-filling: players with b_n <= p drop out and the price
    is recomputed until the set is stable.  The returned price is not
    clamped and is <= 0 when capacity exceeds total demand even for free.
    """
    b, s, C = scenario.b, scenario.s, scenario.capacity
    active = np.ones(b.size, dtype=bool)
    while True:
        if not active.any():
            raise DegenerateScenario("no PEVG is willing to buy at any price")
        p = (np.sum(b[active] / s[active]) - C) / np.sum(1.0 / s[active])
        keep = active & (b > p)
        if np.array_equal(keep, active):
            return float(p), active
        active = keep


def follower_response(scenario: Scenario, p: float) -> tuple[np.ndarray, float]:
    """Closed-form followers' equilibrium ``(x, lambda)`` at a fixed price."""
    pb, _ = binding_price(scenario)
    lam = max(0.0, pb - p)
    x = np.maximum(0.0, (scenario.b - (p + lam)) / scenario.s)
    return x, lam


def closed_form_gse(scenario: Scenario) -> GseOutcome:
    pb, active = binding_price(scenario)
    p_star = max(0.0, pb)
    x = np.where(active, (scenario.b - p_star) / scenario.s, 0.0)
    x = np.maximum(x, 0.0)
    p0 = scenario.grid.initial_price
    return GseOutcome(
        x_star=x,
        p_star=p_star,
        lam=0.0,
        revenue=p_star * float(x.sum()),
        utilities=utilities(scenario, x, p_star),
        iterations_total=0,
        initial_lambda=max(0.0, p_star - p0),
        slack_at_open=pb < p0,
    )


def optimal_price(scenario: Scenario, ve: VeSolution, p_used: float) -> float:
    """Leader price b_n - s_n x_n read off the players still buying energy.

    The levels agree at an exact equilibrium; averaging them with weights
    1/s_n gives (sum b/s - sum x) / sum 1/s over buyers, which inherits
    the exactness of the total demand on the capacity face.
    """
    x = ve.x_star
    interior = x > INTERIOR_TOL
    if not interior.any():
        raise DegenerateScenario(f"no PEVG buys energy at price {p_used}")
    b, s = scenario.b[interior], scenario.s[interior]
    level = (np.sum(b / s) - np.sum(x[interior])) / np.sum(1.0 / s)
    return max(0.0, float(level))


def gse_solve(
    scenario: Scenario,
    cfg: SolverConfig | None = None,
    x0=None,
    record: bool = False,
) -> GseOutcome:
    """Follower equilibrium at the opening price, then the leader's price.

    When the opening price leaves capacity unsold the leader lowers its
    price along the aggregate demand slope of the players still buying,
    which lands at or below the binding price; one more follower round
    then exposes the remaining multiplier and the usual update applies.
    """
    cfg = cfg or SolverConfig()
    C = scenario.capacity
    b, s = scenario.b, scenario.s
    p = scenario.grid.initial_price
    x = np.zeros(scenario.n) if x0 is None else np.asarray(x0, dtype=float)
    phases: list[VeSolution] = []
    total = 0

    for _ in range(MAX_ROUNDS):
        ve = ss_solve(scenario, p, x, cfg, record=record, warn=False)
        phases.append(ve)
        total += ve.iterations
        x = ve.x_star
        if ve.lam > LAMBDA_TOL:
            p = optimal_price(scenario, ve, p)
            continue
        slack = C - float(x.sum())
        if slack > 1e-9 * max(1.0, C) and p > 0:
            buyers = b >= p
            if buyers.any():
                p = max(0.0, p - slack / float(np.sum(1.0 / s[buyers])))
            else:
                p = float(b.max())
            continue
        if slack <= 1e-9 * max(1.0, C) and (x > INTERIOR_TOL).any():
            # capacity binds with a vanishing multiplier: read the price off the demands
            p = optimal_price(scenario, ve, p)
        break
    else:
        raise ConsistencyError(f"leader price did not settle in {MAX_ROUNDS} rounds")

    if C - float(x.sum()) > 1e-9 * max(1.0, C):
        warnings.warn("capacity exceeds total demand even at price 0", stacklevel=2)
    expected = np.maximum(0.0, (b - p) / s)
    if np.max(np.abs(expected - x)) > EQ_TOL:
        raise ConsistencyError(
            f"equilibrium at p*={p} deviates from (b - p*)/s by {np.max(np.abs(expected - x)):.3e}"
        )
    return GseOutcome(
        x_star=x,
        p_star=p,
        lam=ve.lam,
        revenue=p * float(x.sum()),
        utilities=utilities(scenario, x, p),
        iterations_total=total,
        initial_lambda=phases[0].lam,
        slack_at_open=phases[0].lam <= LAMBDA_TOL
        and C - float(phases[0].x_star.sum()) > 1e-9 * max(1.0, C),
        phases=phases,
    )


@dataclass(frozen=True)
class GseCheck:
    passed: bool
    max_violation: float
    follower_violation: float
    leader_violation: float
    slack_revenue_gap: float  # revenue the leader forgoes by not pricing into slack capacity


def check_gse(
    scenario: Scenario,
    outcome: GseOutcome,
    price_grid_step: float = 0.01,
    demand_grid_step: float = 0.01,
    anticipate_slack: bool = False,
    tol: float = 1e-6,
) -> GseCheck:
    """Brute-force test of the two equilibrium inequalities.

    Followers: no unilateral move of x_n on a grid over its feasible range
    (plus the exact best response) raises that player's payoff.  Leader: no
    grid price raises revenue once followers re-equilibrate.  By default
    only prices at which the followers still exhaust capacity are leader
    alternatives; ``anticipate_slack=True`` admits every price in
    [0, max b] so that a revenue gain from leaving capacity unsold counts
    as a violation too.  That gain is reported either way.
    """
    x = np.asarray(outcome.x_star, dtype=float)
    p_star = outcome.p_star
    b, s, C = scenario.b, scenario.s, scenario.capacity
    if not feasible(scenario, x, 1e-7):
        raise ValueError("outcome allocation is not feasible")

    follower = 0.0
    for n in range(scenario.n):
        room = max(0.0, C - (x.sum() - x[n]))
        grid = np.arange(0.0, room, demand_grid_step)
        best = np.clip((b[n] - p_star) / s[n], 0.0, room)
        cands = np.concatenate([grid, [room, best]])
        gain = b[n] * cands - 0.5 * s[n] * cands**2 - p_star * cands
        here = b[n] * x[n] - 0.5 * s[n] * x[n] ** 2 - p_star * x[n]
        follower = max(follower, float(gain.max() - here))

    pb, _ = binding_price(scenario)
    prices = np.concatenate([np.arange(0.0, b.max() + price_grid_step, price_grid_step), [max(pb, 0.0)]])
    # followers' equilibrium at price q only depends on max(q, binding price)
    eff = np.maximum(prices, pb)
    demand = np.maximum(0.0, (b[None, :] - eff[:, None]) / s[None, :]).sum(axis=1)
    revenue = prices * demand
    here = p_star * float(x.sum())
    binding = demand >= C - 1e-9 * max(1.0, C)
    gains = revenue - here
    binding_gain = float(gains[binding].max()) if binding.any() else 0.0
    slack_gain = float(gains[~binding].max()) if (~binding).any() else 0.0
    leader = max(binding_gain, slack_gain) if anticipate_slack else binding_gain

    follower = max(follower, 0.0)
    leader = max(leader, 0.0)
    worst = max(follower, leader)
    return GseCheck(
        passed=worst <= tol,
        max_violation=worst,
        follower_violation=follower,
        leader_violation=leader,
        slack_revenue_gap=max(slack_gain, 0.0),
    )
