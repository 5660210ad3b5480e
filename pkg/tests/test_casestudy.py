import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mre.casestudy import case_study_inputs, ellipse_points, run_case_study
from mre.core import expand_moment_views, view_residual
from mre.hmc import HmcConfig

from conftest import random_spd


def test_inputs_shape_and_values():
    base, mv = case_study_inputs()
    assert base.dim == 7
    np.testing.assert_allclose(base.mean, 0.10)
    np.testing.assert_allclose(np.sqrt(np.diag(base.cov)), 0.20)
    np.testing.assert_allclose(base.cov[0, 1], 0.7 * 0.04)
    np.testing.assert_allclose(mv.mu_info, [0.10, 0.10, 0.35])
    np.testing.assert_allclose(mv.sigma2_info, 0.04 * np.array([[1, -0.8], [-0.8, 1]]))


@given(st.integers(0, 10_000), st.floats(0.5, 3.0))
def test_ellipse_points_lie_on_contour(seed, radius):
    rng = np.random.default_rng(seed)
    cov = random_spd(rng, 3)
    mean = rng.standard_normal(3)
    pts = ellipse_points(mean, cov, 0, 2, n_points=100, radius=radius)
    assert pts.shape == (100, 2)
    d = pts - mean[[0, 2]]
    inv = np.linalg.inv(cov[np.ix_([0, 2], [0, 2])])
    np.testing.assert_allclose(np.einsum("ij,jk,ik->i", d, inv, d), radius**2, rtol=1e-10)


def test_ellipse_points_are_distinct():
    pts = ellipse_points([0, 0], np.eye(2), 0, 1, n_points=100)
    assert len(np.unique(np.round(pts, 12), axis=0)) == 100


@pytest.mark.slow
def test_small_run_converges_to_closed_form():
    hmc = HmcConfig(step_size=0.1, n_leapfrog=20, n_burnin=200, n_chains=200, jitter=0.2)
    res = run_case_study(n_scenarios=20_000, seed=2, hmc=hmc, pairs=((0, 1),), n_points=20)
    assert res.iterative.converged
    assert res.max_residual() < 1e-8
    ev = expand_moment_views(res.views, res.base.mean)
    assert np.abs(view_residual(res.iterative.scenarios, ev)).max() < 1e-8
    rows = res.table()
    assert len(rows) <= 6
    assert rows[-1]["ens"] >= 0.99
    assert rows[-1]["mean_error"] < 5e-3
    stages = {k[0] for k in res.ellipses}
    assert {"base", "final", "analytic"} <= stages
    assert all(v.shape == (20, 2) for v in res.ellipses.values())
