import numpy as np
import pytest

from mre.core import ExpectationViews, NormalParams, TiltedDensity, linear_views, normal_numerator
from mre.errors import SamplerTuningError, ValidationError
from mre.hmc import (
    HmcConfig,
    effective_sample_size,
    leapfrog,
    log_density,
    log_density_gradient,
    run_chains,
    sample,
)


def std_normal(n=1, theta=None):
    td = normal_numerator(NormalParams(np.zeros(n), np.eye(n)), linear_views(np.eye(n), np.zeros(n)))
    return td if theta is None else td.retilt(theta)


def energy_error(td, eps, rng, n_steps):
    x = rng.standard_normal((200, td.start.size))
    r = rng.standard_normal(x.shape)
    x1, r1 = leapfrog(td, x, r, eps, n_steps)
    h0 = -td.logpdf(x) + 0.5 * (r * r).sum(1)
    h1 = -td.logpdf(x1) + 0.5 * (r1 * r1).sum(1)
    return np.abs(h1 - h0).mean()


def test_config_validation():
    for bad in (dict(step_size=0), dict(n_leapfrog=0), dict(thin=0), dict(n_burnin=-1),
                dict(target_accept=1.0), dict(jitter=1.0), dict(seed=-1)):
        with pytest.raises(ValidationError):
            HmcConfig(**bad)


def test_log_density_examples():
    td = std_normal()
    assert log_density(td, np.array([1.5])) == pytest.approx(-1.125)
    tilted = std_normal(theta=[1.0])
    assert log_density(tilted, np.array([0.7])) == pytest.approx(0.7 - 0.245)
    assert log_density_gradient(tilted, np.array([1.0]))[0] == pytest.approx(0.0)
    assert log_density_gradient(td, np.array([0.0]))[0] == 0.0


def test_log_density_differences_ignore_constants():
    td = std_normal(2)
    shifted = TiltedDensity(lambda x: td.log_numerator(x) + 17.0, td.grad_log_numerator, td.theta, td.views)
    x, y = np.array([0.3, -1.0]), np.array([1.2, 0.4])
    assert log_density(td, x) - log_density(td, y) == pytest.approx(log_density(shifted, x) - log_density(shifted, y))


def test_gradient_matches_finite_differences(rng):
    w = rng.standard_normal((3, 3))
    views = ExpectationViews(
        lambda x: np.einsum("mi,kij,mj->mk", x, np.stack([w, w.T @ w, np.eye(3)]), x),
        np.zeros(3),
        lambda x: np.einsum("kij,mj->mki", np.stack([w + w.T, 2 * w.T @ w, 2 * np.eye(3)]), x),
    )
    base = normal_numerator(NormalParams(np.zeros(3), np.eye(3)), views)
    td = base.retilt([0.05, -0.1, 0.02])
    h = 1e-6
    for x in rng.standard_normal((20, 3)):
        num = [(log_density(td, x + h * e) - log_density(td, x - h * e)) / (2 * h) for e in np.eye(3)]
        np.testing.assert_allclose(log_density_gradient(td, x), num, rtol=1e-5, atol=1e-8)


def test_non_finite_density_is_reported():
    views = linear_views([[1.0]], [0.0])
    td = TiltedDensity(lambda x: np.log(x[:, 0]), lambda x: 1 / x, np.zeros(1), views, np.array([-1.0]))
    with pytest.raises(ValidationError, match="not finite"):
        with np.errstate(invalid="ignore"):
            log_density(td, np.array([[-1.0]]))
    with pytest.raises(ValidationError, match="x0"):
        with np.errstate(invalid="ignore"):
            run_chains(td, HmcConfig(n_samples=10, n_burnin=0))


# ---------------------------------------------------------------------------
# Integrator
# ---------------------------------------------------------------------------


def test_leapfrog_flat_density_zero_momentum():
    views = linear_views([[1.0, 0.0]], [0.0])
    flat = TiltedDensity(lambda x: np.zeros(len(x)), lambda x: np.zeros_like(x), np.zeros(1), views)
    x, r = leapfrog(flat, np.array([0.3, -2.0]), np.zeros(2), 0.5, 10)
    np.testing.assert_array_equal(x, [0.3, -2.0])
    np.testing.assert_array_equal(r, [0.0, 0.0])


def test_leapfrog_is_reversible(rng):
    td = normal_numerator(NormalParams(np.zeros(3), [[1, 0.5, 0], [0.5, 2, 0.3], [0, 0.3, 1]]),
                          linear_views(np.eye(3), np.zeros(3)))
    x0, r0 = rng.standard_normal((2, 50, 3))
    x1, r1 = leapfrog(td, x0, r0, 0.1, 25)
    x2, r2 = leapfrog(td, x1, -r1, 0.1, 25)
    np.testing.assert_allclose(x2, x0, atol=1e-8)
    np.testing.assert_allclose(-r2, r0, atol=1e-8)


def test_energy_error_is_second_order(rng):
    td = std_normal()
    e1 = energy_error(td, 0.2, np.random.default_rng(1), 10)
    e2 = energy_error(td, 0.1, np.random.default_rng(1), 20)
    assert 3.0 < e1 / e2 < 5.0


def test_leapfrog_accepts_per_row_steps(rng):
    td = std_normal(2)
    x, r = rng.standard_normal((2, 4, 2))
    eps = np.array([0.1, 0.2, 0.05, 0.1])
    xb, _ = leapfrog(td, x, r, eps, 5)
    for i in range(4):
        xi, _ = leapfrog(td, x[i], r[i], eps[i], 5)
        np.testing.assert_allclose(xb[i], xi)


# ---------------------------------------------------------------------------
# Sampler
# ---------------------------------------------------------------------------


def test_sampler_is_deterministic_given_seed():
    cfg = HmcConfig(n_samples=500, n_burnin=50, n_chains=4, seed=11, jitter=0.1)
    a = sample(std_normal(2), cfg)
    b = sample(std_normal(2), cfg)
    np.testing.assert_array_equal(a.scenarios, b.scenarios)
    c = sample(std_normal(2), cfg.with_seed(12))
    assert not np.array_equal(a.scenarios, c.scenarios)


def test_sample_shape_and_uniform_probabilities():
    cfg = HmcConfig(n_samples=1001, n_burnin=10, n_chains=10, thin=2)
    ws = sample(std_normal(3), cfg)
    assert ws.scenarios.shape == (1001, 3)
    np.testing.assert_allclose(ws.probs, 1 / 1001)


def test_standard_normal_moments():
    run = run_chains(std_normal(), HmcConfig(n_samples=50_000, n_burnin=200, n_chains=50, seed=5, jitter=0.2))
    x = run.draws[..., 0]
    se = 1.0 / np.sqrt(effective_sample_size(x))
    assert abs(x.mean()) < 3 * se
    assert x.var() == pytest.approx(1.0, rel=0.05)


def test_tuning_failure_is_reported():
    narrow = normal_numerator(NormalParams([0.0], [[1e-4]]), linear_views([[1.0]], [0.0]))
    with pytest.raises(SamplerTuningError) as exc:
        run_chains(narrow, HmcConfig(step_size=1.0, n_samples=100, n_burnin=100))
    assert exc.value.diagnostics["burnin_accept_rate"] < 0.05


def test_step_size_adaptation_reaches_target():
    narrow = normal_numerator(NormalParams([0.0, 0.0], np.diag([0.01, 0.02])), linear_views(np.eye(2), [0, 0]))
    cfg = HmcConfig(step_size=0.05, n_leapfrog=10, n_samples=2000, n_burnin=500, adapt=True, n_chains=4, seed=3)
    run = run_chains(narrow, cfg)
    assert run.step_size != 0.05
    assert 0.6 < run.accept_rate < 0.95


# ---------------------------------------------------------------------------
# Effective sample size
# ---------------------------------------------------------------------------


def test_ess_iid(rng):
    x = rng.standard_normal((4, 5000))
    assert effective_sample_size(x) == pytest.approx(20_000, rel=0.1)


def test_ess_ar1(rng):
    phi = 0.8
    e = rng.standard_normal((4, 50_000))
    x = np.empty_like(e)
    x[:, 0] = e[:, 0] / np.sqrt(1 - phi**2)
    for t in range(1, x.shape[1]):
        x[:, t] = phi * x[:, t - 1] + e[:, t]
    expected = x.size * (1 - phi) / (1 + phi)
    assert effective_sample_size(x) == pytest.approx(expected, rel=0.15)


def test_ess_detects_stuck_chains(rng):
    # chains sitting at different values carry little information
    x = rng.standard_normal((4, 1)) + 0.01 * rng.standard_normal((4, 1000))
    assert effective_sample_size(x) < 100
