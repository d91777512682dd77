"""Variational-inequality machinery for the followers' game at a fixed price.

The followers' shared-constraint game is solved as VI(X, F) with
X = {x >= 0, sum(x) <= C} and F(x) = s*x + p - b, using the
Solodov-Svaiter hyperplane projection method: an Armijo search along
the natural residual builds a half-space that separates the iterate
from the solution set, and the next iterate is the projection of the
current one onto X intersected with that half-space.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from evcharge.model import Scenario

INTERIOR_TOL = 1e-7
MAX_BACKTRACKS = 60
SLACK_TOL = 1e-6  # relative slack beyond which the cap counts as inactive


@dataclass(frozen=True)
class SolverConfig:
    tol: float = 1e-8
    max_iter: int = 10000
    sigma: float = 0.3
    gamma: float = 0.5
    eta0: float = 1.0

    def __post_init__(self):
        if not 0 < self.sigma < 1:
            raise ValueError(f"sigma must lie in (0, 1), got {self.sigma}")
        if not 0 < self.gamma < 1:
            raise ValueError(f"gamma must lie in (0, 1), got {self.gamma}")
        if not self.eta0 > 0:
            raise ValueError(f"eta0 must be > 0, got {self.eta0}")
        if not self.tol > 0:
            raise ValueError(f"tol must be > 0, got {self.tol}")
        if self.max_iter < 1:
            raise ValueError(f"max_iter must be >= 1, got {self.max_iter}")


@dataclass
class SsIterate:
    """One step of the projection method, kept when tracing is requested."""

    x: np.ndarray
    z: np.ndarray | None
    eta: float | None
    residual: float
    lambdas: np.ndarray  # b - s*x - p per PEVG


@dataclass
class VeSolution:
    x_star: np.ndarray
    lam: float
    iterations: int
    kkt_residual: float
    price: float
    residual: float = 0.0
    trace: list[SsIterate] = field(default_factory=list, repr=False)


class NonConvergence(RuntimeError):
    def __init__(self, x, residual, iterations):
        super().__init__(f"no convergence after {iterations} iterations (residual {residual:.3e})")
        self.x = x
        self.residual = residual
        self.iterations = iterations


class LineSearchError(RuntimeError):
    pass


class GeometryError(ValueError):
    pass


def _check_len(scenario: Scenario, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (scenario.n,):
        raise ValueError(f"vector has shape {x.shape}, scenario has {scenario.n} PEVGs")
    return x


def game_map(scenario: Scenario, x, p: float) -> np.ndarray:
    """Negated utility gradients, F_n = s_n x_n + p - b_n."""
    x = _check_len(scenario, x)
    return scenario.s * x + p - scenario.b


def jacobian_diag(scenario: Scenario) -> np.ndarray:
    # JF is diagonal; strictly positive entries make F strongly monotone
    return scenario.s.copy()


def _project_with_shift(y: np.ndarray, C: float) -> tuple[np.ndarray, float, float]:
    """Capped-orthant projection returning ``(x, tau, slack)``.

    ``slack = C - sum(x)`` is exactly zero whenever the cap is active, so
    callers can form sums over points on the face without cancellation.
    """
    x = np.maximum(y, 0.0)
    t = x.sum()
    if t <= C:
        return x, 0.0, C - t
    u = np.sort(y)[::-1]
    css = np.cumsum(u) - C
    k = np.arange(1, u.size + 1)
    rho = np.nonzero(u - css / k > 0)[0][-1]
    tau = css[rho] / (rho + 1)
    return np.maximum(y - tau, 0.0), float(tau), 0.0


def project_feasible(y, C: float) -> np.ndarray:
    """Euclidean projection onto {x >= 0, sum(x) <= C}."""
    if not C > 0:
        raise ValueError(f"capacity must be > 0, got {C}")
    return _project_with_shift(np.asarray(y, dtype=float), C)[0]


def _common_level(a, mask):
    return float(a[mask].mean()) if mask.any() else float(a.mean())


def project_feasible_rows(Y, C: float) -> np.ndarray:
    """Row-wise :func:`project_feasible` for a batch of points."""
    Y = np.asarray(Y, dtype=float)
    X = np.maximum(Y, 0.0)
    over = X.sum(axis=1) > C
    if over.any():
        Yo = Y[over]
        U = -np.sort(-Yo, axis=1)
        css = np.cumsum(U, axis=1) - C
        k = np.arange(1, Yo.shape[1] + 1)
        rho = np.sum(U - css / k > 0, axis=1) - 1
        tau = css[np.arange(Yo.shape[0]), rho] / (rho + 1)
        X[over] = np.maximum(Yo - tau[:, None], 0.0)
    return X


def _split_dot(a, d, sum_d):
    # <a, d> with a common level c of a handled through sum_d, which the
    # caller knows exactly from tracked slacks: <a, d> = c*sum(d) + <a - c, d>.
    c = _common_level(a, d != 0)
    return c * sum_d + (a - c) @ d


def _project_cut(y, sy, C, a, z, sz):
    """Projection of y onto X cut by <a, w - z> <= 0; returns ``(w, slack_w)``.

    ``sy`` and ``sz`` are the capacity slacks of ``y`` and ``z``.  The
    half-space value is always evaluated as c*(sz - sw) + <a - c, w - z>, with c
    the level of a over the support:
    near the solution a is dominated by a constant shift (the shared
    multiplier) while w - z is tiny and nearly orthogonal to it, so the
    naive dot product would drown the cut in rounding noise.
    """
    c = _common_level(a, (y > 0) | (z > 0))
    ap = a - c
    a_scale = float(np.abs(a).max())

    def gap(w, sw):
        return c * (sz - sw) + ap @ (w - z)

    def at(nu):
        w, tau, sw = _project_with_shift(y - nu * a, C)
        return w, tau, sw, gap(w, sw)

    if sy >= 0 and np.all(y >= 0):
        w0, tau0, sw0 = y, 0.0, sy
    else:
        w0, tau0, sw0 = _project_with_shift(y, C)
    g0 = gap(w0, sw0)
    if g0 <= 0:
        return w0, sw0

    eps = 1e-12 * max(1.0, C)
    g_tol = 1e-9 * g0

    def polish(w_guess, cap_active):
        A = w_guess > 0
        if not A.any():
            return None
        yA, zA = y[A], z[A]
        if cap_active:
            apA = ap[A]
            m = np.array([[A.sum(), apA.sum()], [apA.sum(), apA @ apA]])
            rhs = np.array([
                -sy - y[~A].sum(),
                apA @ (yA - zA) - ap[~A] @ z[~A] + c * sz,
            ])
            det = m[0, 0] * m[1, 1] - m[0, 1] ** 2
            if det <= 1e-13 * m[0, 0] * max(m[1, 1], 1e-300):
                return None
            shift, nu = np.linalg.solve(m, rhs)
            mu = shift - nu * c
            if mu < -1e-12 * max(1.0, abs(shift), abs(nu * c)):
                return None
            w = np.maximum(y - shift - nu * ap, 0.0)
            if abs(w.sum() - C) > eps:
                return None
            sw = 0.0
        else:
            aA = a[A]
            if not np.any(aA):
                return None
            nu = (aA @ (yA - zA) - a[~A] @ z[~A]) / (aA @ aA)
            w = np.maximum(y - nu * a, 0.0)
            sw = C - w.sum()
            if sw < -eps:
                return None
        if nu < 0:
            return None
        if abs(gap(w, sw)) > g_tol + 1e-15 * a_scale * max(1.0, C):
            return None
        return w, sw

    # the support of y with its cap status is almost always the answer
    cand = polish(w0, sw0 == 0)
    if cand is None:
        # a cut parallel to the face can push the point off it
        cand = polish(w0, sw0 != 0)
    if cand is not None:
        return cand

    lo = 0.0
    curv = float(ap @ ap)
    if curv <= 1e-12 * float(a @ a):
        curv = float(a @ a)
    hi = max(g0 / curv, 1e-300)
    # past nu_sat every coordinate with a_n != 0 sits at its extreme and the
    # projection has (nearly) reached its limit over X
    nu_sat = (float(np.abs(y).max()) + C + 1.0) / float(np.abs(a[a != 0]).min())
    while True:
        wh, tau_h, swh, gh = at(hi)
        if gh <= 0:
            break
        if hi > nu_sat:
            if gh <= 1e-9 * a_scale * max(1.0, C):
                # the half-space only touches X: rounding-level gap
                return wh, swh
            if hi > 1e12 * nu_sat:
                raise GeometryError("capped orthant and half-space do not intersect")
        lo, hi = hi, 2.0 * hi
    cand = polish(wh, tau_h > 0)
    if cand is not None:
        return cand

    best = (wh, swh)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        wm, tau_m, swm, gm = at(mid)
        cand = polish(wm, tau_m > 0)
        if cand is not None:
            return cand
        if gm > 0:
            lo = mid
        else:
            hi, best = mid, (wm, swm)
        if hi - lo <= 1e-16 * hi:
            break
    return best


def project_capped_halfspace(y, C: float, normal, anchor) -> np.ndarray:
    """Projection onto {x >= 0, sum(x) <= C, <normal, x - anchor> <= 0}.

    Bisection on the half-space multiplier; each trial value reduces to a
    plain capped-orthant projection.  Once the support settles, the two
    multipliers are solved for exactly.
    """
    if not C > 0:
        raise ValueError(f"capacity must be > 0, got {C}")
    y = np.asarray(y, dtype=float)
    a = np.asarray(normal, dtype=float)
    z = np.asarray(anchor, dtype=float)
    if not np.any(a):
        raise ValueError("half-space normal must be nonzero")
    a = np.where(np.abs(a) < 1e-12 * np.abs(a).max(), 0.0, a)
    return _project_cut(y, C - y.sum(), C, a, z, C - z.sum())[0]


def _armijo(scenario, x, sx, r, sum_r, p, cfg):
    rr = float(r @ r)
    if rr == 0:
        raise ValueError("residual direction must be nonzero")
    eta = cfg.eta0
    for _ in range(MAX_BACKTRACKS + 1):
        z = x - eta * r
        if _split_dot(game_map(scenario, z, p), r, sum_r) >= cfg.sigma * rr:
            return z, sx + eta * sum_r, eta
        eta *= cfg.gamma
    raise LineSearchError("Armijo search failed; the game map is not monotone here")


def armijo_search(scenario: Scenario, x, r, p: float, cfg: SolverConfig | None = None):
    """Backtrack along x - eta*r until <F(z), r> >= sigma*|r|^2.

    Returns ``(z, eta)`` with eta = eta0 * gamma**m for the smallest m >= 0.
    """
    cfg = cfg or SolverConfig()
    x = np.asarray(x, dtype=float)
    r = np.asarray(r, dtype=float)
    z, _, eta = _armijo(scenario, x, scenario.capacity - x.sum(), r, r.sum(), p, cfg)
    return z, eta


def natural_residual(scenario: Scenario, x, p: float) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return x - project_feasible(x - game_map(scenario, x, p), scenario.capacity)


def recover_multiplier(scenario: Scenario, x, p: float) -> float:
    """Shared multiplier from the interior players' stationarity, clamped at 0.

    Zero when capacity is visibly slack, since a positive multiplier there
    is only the solver's residual showing through.
    """
    x = np.asarray(x, dtype=float)
    interior = x > INTERIOR_TOL
    if not interior.any() or scenario.capacity - x.sum() > SLACK_TOL * max(1.0, scenario.capacity):
        return 0.0
    lam = scenario.b[interior] - scenario.s[interior] * x[interior] - p
    return max(0.0, float(lam.max()))


def kkt_residual(scenario: Scenario, x, lam: float, p: float) -> float:
    """Largest violation among stationarity, complementarity and capacity.

    Stationarity uses the natural complementarity measure |min(x_n, F_n + lam)|,
    which vanishes iff F_n + lam = 0 for x_n > 0 and F_n + lam >= 0 for x_n = 0.
    """
    x = _check_len(scenario, x)
    w = game_map(scenario, x, p) + lam
    stationarity = float(np.max(np.abs(np.minimum(x, w))))
    gap = float(x.sum() - scenario.capacity)
    complementarity = abs(lam * gap)
    primal = max(0.0, gap, float(np.max(-x)))
    return max(stationarity, complementarity, primal)


def ss_solve(
    scenario: Scenario,
    p: float,
    x0=None,
    cfg: SolverConfig | None = None,
    record: bool = False,
    warn: bool = True,
) -> VeSolution:
    """Followers' variational equilibrium at price ``p``."""
    cfg = cfg or SolverConfig()
    C = scenario.capacity
    x = np.zeros(scenario.n) if x0 is None else _check_len(scenario, x0).copy()
    if np.any(x < -1e-9) or x.sum() > C + 1e-9:
        raise ValueError("starting point is not feasible")
    x = project_feasible(x, C)

    trace: list[SsIterate] = []
    sx = C - x.sum()
    k = 0
    while True:
        F = game_map(scenario, x, p)
        proj, _, sp = _project_with_shift(x - F, C)
        r = x - proj
        res = float(np.sqrt(r @ r))
        if res <= cfg.tol:
            if record:
                trace.append(SsIterate(x.copy(), None, None, res, scenario.b - scenario.s * x - p))
            break
        if k >= cfg.max_iter:
            raise NonConvergence(x, res, k)
        # sum(r) from slacks: exactly 0 when both points sit on the capacity face
        z, sz, eta = _armijo(scenario, x, sx, r, sp - sx, p, cfg)
        if record:
            trace.append(SsIterate(x.copy(), z, eta, res, scenario.b - scenario.s * x - p))
        x, sx = _project_cut(x, sx, C, game_map(scenario, z, p), z, sz)
        k += 1

    lam = recover_multiplier(scenario, x, p)
    # with slack capacity the condition sum(b) > p*N + sum(s*x) can only hold up to solver noise
    margin = scenario.b.sum() - p * scenario.n - float(scenario.s @ x)
    if warn and lam == 0 and C - x.sum() > 1e-9 * max(1.0, C) and margin <= 1e-6 * scenario.b.sum():
        warnings.warn(f"capacity is not scarce at price {p}; every PEVG is satiated", stacklevel=2)
    return VeSolution(
        x_star=x,
        lam=lam,
        iterations=k,
        kkt_residual=kkt_residual(scenario, x, lam, p),
        price=p,
        residual=res,
        trace=trace,
    )
