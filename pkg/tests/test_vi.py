import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from evcharge.model import Scenario, feasible
from evcharge.stackelberg import follower_response
from evcharge.vi import (
    NonConvergence,
    SolverConfig,
    armijo_search,
    game_map,
    jacobian_diag,
    kkt_residual,
    natural_residual,
    project_capped_halfspace,
    project_feasible,
    project_feasible_rows,
    recover_multiplier,
    ss_solve,
)

from conftest import random_instance, scenarios, vectors

VE = np.array([50 / 3, 40 / 3])
LAM = 19 / 3


def test_game_map(worked):
    np.testing.assert_allclose(game_map(worked, [5, 5], 17), [-18, -23])
    np.testing.assert_allclose(game_map(worked, VE, 17), [-LAM, -LAM], atol=1e-12)
    sc = Scenario.from_arrays([40, 50], [1, 2], 30)
    np.testing.assert_allclose(game_map(sc, [0, 0], 0)[0] + 40, 0)
    np.testing.assert_array_equal(game_map(Scenario.from_arrays([7, 9], [1, 3], 5), [0, 0], 0) + [7, 9], 0)


def test_game_map_zero_when_price_equals_b():
    sc = Scenario.from_arrays([12, 30, 41], [1, 1.5, 2], 50)
    for n, bn in enumerate(sc.b):
        assert game_map(sc, np.zeros(3), bn)[n] == 0


def test_jacobian_diag():
    np.testing.assert_array_equal(jacobian_diag(Scenario.from_arrays([40, 50], [1, 2], 30)), [1, 2])
    np.testing.assert_array_equal(jacobian_diag(Scenario.from_arrays([40] * 5, [1.5] * 5, 30)), [1.5] * 5)


@given(scenarios())
def test_jacobian_positive(sc):
    assert np.all(jacobian_diag(sc) > 0)


def test_project_feasible_examples():
    np.testing.assert_allclose(project_feasible([1, 2], 10), [1, 2])
    np.testing.assert_allclose(project_feasible([-1, 2], 10), [0, 2])
    np.testing.assert_allclose(project_feasible([6, 6], 10), [5, 5])


def _brute_projection(y, C):
    # reference: bisection on the shift tau of the capped orthant
    y = np.asarray(y, float)
    if np.maximum(y, 0).sum() <= C:
        return np.maximum(y, 0)
    lo, hi = 0.0, float(y.max())
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if np.maximum(y - mid, 0).sum() > C:
            lo = mid
        else:
            hi = mid
    return np.maximum(y - hi, 0)


@given(vectors(), st.floats(0.1, 100))
def test_projection_matches_bisection(y, C):
    np.testing.assert_allclose(project_feasible(y, C), _brute_projection(y, C), atol=1e-9 * (1 + C))


@given(vectors(), st.floats(0.1, 100))
def test_projection_idempotent_and_feasible(y, C):
    x = project_feasible(y, C)
    assert np.all(x >= 0) and x.sum() <= C * (1 + 1e-12)
    np.testing.assert_allclose(project_feasible(x, C), x, atol=1e-12 * (1 + C))


@given(st.integers(1, 6).flatmap(lambda n: st.tuples(vectors(n, n), vectors(n, n))), st.floats(0.1, 100))
def test_projection_nonexpansive(pair, C):
    y1, y2 = pair
    d = np.linalg.norm(project_feasible(y1, C) - project_feasible(y2, C))
    assert d <= np.linalg.norm(y1 - y2) + 1e-9


@given(vectors(), st.floats(0.1, 100))
def test_projection_variational_inequality(y, C):
    # <y - P(y), w - P(y)> <= 0 for vertices w of the feasible set
    x = project_feasible(y, C)
    n = y.size
    for w in [np.zeros(n)] + [C * np.eye(n)[i] for i in range(n)]:
        assert (y - x) @ (w - x) <= 1e-7 * (1 + np.abs(y).max()) * (1 + C)


def test_project_rows_matches_single():
    rng = np.random.default_rng(3)
    Y = rng.normal(5, 10, (50, 7))
    rows = project_feasible_rows(Y, 20.0)
    for y, x in zip(Y, rows):
        np.testing.assert_allclose(x, project_feasible(y, 20.0), atol=1e-12)


def test_capped_halfspace_examples():
    np.testing.assert_allclose(project_capped_halfspace([6, 6], 10, [1, 1], [4, 4]), [4, 4], atol=1e-10)
    np.testing.assert_allclose(project_capped_halfspace([5, 1], 10, [1, 0], [3, 0]), [3, 1], atol=1e-10)
    np.testing.assert_allclose(project_capped_halfspace([1, 2], 10, [1, 1], [4, 4]), [1, 2])


def test_capped_halfspace_rejects_zero_normal():
    with pytest.raises(ValueError):
        project_capped_halfspace([1, 2], 10, [0, 0], [1, 1])


def _qp_reference(y, C, a, z):
    # dual ascent over (tau, nu) by nested bisection; slow but independent
    y, a = np.asarray(y, float), np.asarray(a, float)
    c = float(a @ z)

    def inner(nu):
        return _brute_projection(y - nu * a, C)

    if a @ inner(0.0) <= c:
        return inner(0.0)
    lo, hi = 0.0, 1.0
    while a @ inner(hi) > c and hi < 1e8:
        hi *= 2
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if a @ inner(mid) > c:
            lo = mid
        else:
            hi = mid
    return inner(hi)


@given(st.integers(1, 5).flatmap(lambda n: st.tuples(vectors(n, n, lo=-20, hi=40), vectors(n, n, lo=-5, hi=5))),
       st.floats(1, 60), st.floats(0, 1))
def test_capped_halfspace_matches_reference(pair, C, frac):
    y, a = pair
    if not np.any(np.abs(a) > 1e-3):
        return
    z = project_feasible(np.abs(y) * frac, C)  # anchor inside the set keeps the intersection nonempty
    x = project_capped_halfspace(y, C, a, z)
    ref = _qp_reference(y, C, a, z)
    assert np.all(x >= -1e-12) and x.sum() <= C + 1e-9
    assert a @ (x - z) <= 1e-8 * (1 + np.abs(a).sum() * (1 + C))
    # both are feasible; the exact projection cannot be farther than the reference
    assert np.linalg.norm(x - y) <= np.linalg.norm(ref - y) + 1e-6 * (1 + C)


def test_armijo_hand_example():
    sc = Scenario.from_arrays([10.0], [1.0], 100.0)
    x = np.array([2.0])
    r = natural_residual(sc, x, 0.0)
    np.testing.assert_allclose(r, [-8.0])
    z, eta = armijo_search(sc, x, r, 0.0, SolverConfig(sigma=0.3, gamma=0.5, eta0=1.0))
    assert eta == 0.5
    np.testing.assert_allclose(z, [6.0])


def test_armijo_full_step_when_accepted(worked):
    x = np.array([1.0, 1.0])
    r = natural_residual(worked, x, 17)
    z, eta = armijo_search(worked, x, r, 17, SolverConfig(sigma=0.01))
    assert eta == 1.0


def test_ss_solve_worked_instance(worked):
    ve = ss_solve(worked, 17.0, [0.0, 0.0])
    np.testing.assert_allclose(ve.x_star, VE, atol=1e-6)
    assert ve.lam == pytest.approx(LAM, abs=1e-6)
    assert ve.x_star.sum() == pytest.approx(30, abs=1e-9)
    assert ve.kkt_residual <= 1e-6


def test_ss_solve_from_solution_is_immediate(worked):
    ve = ss_solve(worked, 17.0, VE)
    assert ve.iterations <= 1
    np.testing.assert_allclose(ve.x_star, VE, atol=1e-12)


def test_ss_solve_scalar_unconstrained():
    sc = Scenario.from_arrays([10.0], [1.0], 100.0)
    with pytest.warns(UserWarning):
        ve = ss_solve(sc, 4.0)
    np.testing.assert_allclose(ve.x_star, [6.0], atol=1e-9)
    assert ve.lam == 0


def test_ss_solve_nonconvergence_carries_iterate(worked):
    with pytest.raises(NonConvergence) as info:
        ss_solve(worked, 17.0, cfg=SolverConfig(max_iter=2))
    assert info.value.iterations == 2
    assert info.value.residual > 0
    assert feasible(worked, info.value.x, 1e-9)


def test_kkt_residual_examples(worked):
    assert kkt_residual(worked, VE, LAM, 17) <= 1e-8
    assert kkt_residual(worked, [0, 0], 0, 17) == pytest.approx(33)
    assert kkt_residual(worked, [1, 1], 0, 17) == pytest.approx(max(abs(min(1, 1 - 40 + 17)), abs(min(1, 2 - 50 + 17))))


@given(scenarios())
def test_kkt_complementarity_zero_when_slack(sc):
    x = np.full(sc.n, 0.5 * sc.capacity / sc.n)
    w = game_map(sc, x, 17.0)
    assert kkt_residual(sc, x, 0.0, 17.0) == pytest.approx(float(np.max(np.abs(np.minimum(x, w)))))


@pytest.mark.filterwarnings("ignore:capacity is not scarce")
@given(scenarios(max_n=25), st.floats(0, 60))
def test_ss_solve_matches_closed_form_and_kkt(sc, p):
    ve = ss_solve(sc, p)
    x_ref, lam_ref = follower_response(sc, p)
    np.testing.assert_allclose(ve.x_star, x_ref, atol=1e-6)
    assert ve.kkt_residual <= 1e-6
    if ve.lam > 1e-6:
        assert abs(ve.x_star.sum() - sc.capacity) <= 1e-6 * sc.capacity
    assert ve.lam == pytest.approx(lam_ref, abs=1e-6)


def test_slack_warning_when_capacity_is_not_scarce():
    sc = Scenario.from_arrays([20.0, 30.0], [1.0, 1.0], 100.0)
    with pytest.warns(UserWarning, match="not scarce"):
        ve = ss_solve(sc, 10.0)
    np.testing.assert_allclose(ve.x_star, [10, 20], atol=1e-7)


def test_recover_multiplier(worked):
    assert recover_multiplier(worked, VE, 17) == pytest.approx(LAM)
    assert recover_multiplier(worked, [0, 0], 17) == 0
    assert recover_multiplier(worked, [30, 0], 17) == 0  # marginal utility negative: clamp


def test_fejer_monotone_iterates(worked):
    rng = np.random.default_rng(11)
    sc = random_instance(rng, 8)
    ve = ss_solve(sc, 17.0, record=True)
    x_ref, _ = follower_response(sc, 17.0)
    dist = [np.linalg.norm(it.x - x_ref) for it in ve.trace]
    assert all(b <= a + 1e-9 for a, b in zip(dist, dist[1:]))


def test_solver_config_validation():
    for kw in (dict(tol=0), dict(max_iter=0), dict(sigma=1.5), dict(gamma=1.0), dict(eta0=0)):
        with pytest.raises(ValueError):
            SolverConfig(**kw)
