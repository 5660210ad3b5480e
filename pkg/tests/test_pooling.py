import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mre.core import ExpectationViews, WeightedScenarios, linear_views, relative_entropy_discrete, view_residual
from mre.errors import ConvergenceError, InfeasibleViewsError, ValidationError
from mre.pooling import (
    PoolingConfig,
    dual_gradient,
    dual_hessian,
    dual_objective,
    entropy_pool,
    entropy_pool_features,
    in_convex_hull,
    tilt_probabilities,
)

THETA_STAR = np.log((1 + np.sqrt(13)) / 2)


def three_points(target=1.5):
    ws = WeightedScenarios.uniform([0.0, 1.0, 2.0])
    return ws, linear_views([[1.0]], [target])


def random_problem(seed, j_max=40, k_max=3):
    rng = np.random.default_rng(seed)
    j = int(rng.integers(5, j_max))
    k = int(rng.integers(1, k_max + 1))
    z = rng.standard_normal((j, k))
    p = rng.dirichlet(np.ones(j))
    target = rng.dirichlet(np.ones(j)) @ z
    return p, z, target


def test_tilt_at_zero_is_identity():
    p = np.array([0.2, 0.3, 0.5])
    np.testing.assert_allclose(tilt_probabilities(p, np.arange(3.0), [0.0]), p)


def test_tilt_closed_form():
    q = tilt_probabilities(np.full(3, 1 / 3), np.arange(3.0), [THETA_STAR])
    np.testing.assert_allclose(q, [0.11620, 0.26760, 0.61620], atol=5e-5)
    assert q @ np.arange(3.0) == pytest.approx(1.5, abs=1e-12)


@given(st.floats(-50, 50), st.floats(-3, 3), st.integers(0, 1000))
def test_tilt_invariant_to_feature_shift(c, theta, seed):
    rng = np.random.default_rng(seed)
    p = rng.dirichlet(np.ones(6))
    z = rng.standard_normal(6)
    np.testing.assert_allclose(
        tilt_probabilities(p, z + c, [theta]), tilt_probabilities(p, z, [theta]), rtol=1e-9, atol=1e-15
    )


def test_tilt_survives_huge_exponents():
    q = tilt_probabilities(np.full(3, 1 / 3), np.array([0.0, 1.0, 2.0]), [800.0])
    assert np.all(np.isfinite(q)) and q[2] == pytest.approx(1.0)


def test_tilt_rejects_nan_features():
    with pytest.raises(ValidationError, match="non-finite"):
        tilt_probabilities([0.5, 0.5], [0.0, np.nan], [1.0])


def test_dual_at_zero():
    ws, views = three_points()
    assert dual_objective(0.0, ws, views) == pytest.approx(0.0, abs=1e-15)
    np.testing.assert_allclose(dual_gradient(0.0, ws, views), [-0.5])
    np.testing.assert_allclose(dual_hessian(0.0, ws, views), [[2 / 3]])


def test_dual_minimum_matches_grid_search():
    ws, views = three_points()
    grid = np.arange(-5.0, 5.0, 1e-4)
    vals = np.array([dual_objective(t, ws, views) for t in grid[::10]])
    fine = grid[max(np.argmin(vals) * 10 - 20, 0): np.argmin(vals) * 10 + 20]
    best = min(dual_objective(t, ws, views) for t in fine)
    assert dual_objective(THETA_STAR, ws, views) <= best + 1e-12
    assert dual_objective(THETA_STAR, ws, views) == pytest.approx(best, abs=1e-8)


@given(st.integers(0, 10_000))
def test_dual_is_convex_along_random_segments(seed):
    p, z, eta = random_problem(seed)
    ws = WeightedScenarios(z, p)
    views = ExpectationViews(lambda x: x, eta)
    rng = np.random.default_rng(seed + 1)
    a, b = rng.normal(scale=2, size=(2, eta.size))
    mid = dual_objective(0.5 * (a + b), ws, views)
    assert mid <= 0.5 * (dual_objective(a, ws, views) + dual_objective(b, ws, views)) + 1e-12


def test_hessian_is_psd():
    p, z, eta = random_problem(3)
    ws = WeightedScenarios(z, p)
    h = dual_hessian(np.ones(eta.size), ws, ExpectationViews(lambda x: x, eta))
    np.testing.assert_allclose(h, h.T)
    assert np.linalg.eigvalsh(h).min() >= -1e-14


# ---------------------------------------------------------------------------
# Solver
# ---------------------------------------------------------------------------


def test_pool_three_point_oracle():
    ws, views = three_points()
    res = entropy_pool(ws, views)
    assert res.theta_hat[0] == pytest.approx(THETA_STAR, abs=1e-9)
    t = np.exp(THETA_STAR)
    np.testing.assert_allclose(res.probs_updated, np.array([1, t, t * t]) / (1 + t + t * t), atol=1e-10)
    assert res.residual_norm <= 1e-9


def test_pool_already_satisfied_views_do_nothing():
    ws, views = three_points(1.0)
    res = entropy_pool(ws, views)
    np.testing.assert_allclose(res.probs_updated, ws.probs)
    assert res.theta_hat[0] == 0.0 and res.ens_value == 1.0 and res.iterations == 0


@pytest.mark.parametrize("target", [2.5, -0.1, 7.0])
def test_pool_outside_hull_is_infeasible(target):
    ws, views = three_points(target)
    with pytest.raises(InfeasibleViewsError):
        entropy_pool(ws, views)


def test_hull_precheck():
    ws, views = three_points(2.5)
    with pytest.raises(InfeasibleViewsError, match="convex hull"):
        entropy_pool(ws, views, PoolingConfig(hull_check=True))
    assert in_convex_hull(np.arange(3.0)[:, None], [1.5])
    assert not in_convex_hull(np.arange(3.0)[:, None], [3.0])


def test_iteration_cap_raises_with_history():
    p, z, eta = random_problem(7)
    with pytest.raises(ConvergenceError) as exc:
        entropy_pool_features(p, z, eta, PoolingConfig(max_iter=1, tol=1e-15))
    assert len(exc.value.trace) == 2


def test_redundant_views_are_handled():
    # duplicate feature columns make the Hessian singular
    z = np.arange(4.0)[:, None].repeat(2, axis=1)
    res = entropy_pool_features(np.full(4, 0.25), z, [2.0, 2.0])
    assert res.residual_norm < 1e-9


@given(st.integers(0, 10_000))
def test_pool_properties(seed):
    p, z, eta = random_problem(seed)
    res = entropy_pool_features(p, z, eta)
    q = res.probs_updated
    # exact constraints
    assert np.abs(q @ z - eta).max() <= 1e-8
    # exponential form
    np.testing.assert_allclose(q, tilt_probabilities(p, z, res.theta_hat), rtol=1e-12)
    assert np.all(q > 0) and abs(q.sum() - 1) < 1e-12
    assert res.ens_value == pytest.approx(np.exp(-relative_entropy_discrete(q, p)))


@given(st.integers(0, 10_000))
def test_pool_beats_feasible_alternatives(seed):
    p, z, eta = random_problem(seed, j_max=10, k_max=2)
    q_star = entropy_pool_features(p, z, eta).probs_updated
    # perturb along the null space of the constraints to get other feasible points
    a = np.vstack([z.T, np.ones(z.shape[0])])
    null = np.linalg.svd(a)[2][a.shape[0]:]
    rng = np.random.default_rng(seed)
    for _ in range(20):
        q = q_star + null.T @ rng.normal(scale=0.02, size=null.shape[0])
        if np.all(q >= 0):
            assert relative_entropy_discrete(q, p) >= relative_entropy_discrete(q_star, p) - 1e-12


def test_entropy_pool_with_view_object(rng):
    x = rng.standard_normal((500, 2))
    ws = WeightedScenarios.uniform(x)
    views = linear_views([[1.0, 0.0], [0.0, 1.0]], [0.3, -0.2])
    res = entropy_pool(ws, views)
    assert np.abs(view_residual(ws.with_probs(res.probs_updated), views)).max() <= 1e-8
