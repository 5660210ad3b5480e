"""Entropy pooling on a fixed set of scenarios.

The tilted probabilities ``p_j exp(theta' z_j) / sum_i p_i exp(theta' z_i)`` are
found by minimizing the convex dual ``log sum_j p_j exp(theta' z_j) - theta' eta``
with a damped, Levenberg-regularized Newton method.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg, optimize
from scipy.special import logsumexp

from .core import ExpectationViews, WeightedScenarios, ens
from .errors import ConvergenceError, InfeasibleViewsError, ValidationError

__all__ = [
    "PoolingConfig",
    "PoolingResult",
    "tilt_probabilities",
    "dual_objective",
    "dual_gradient",
    "dual_hessian",
    "entropy_pool",
    "entropy_pool_features",
    "in_convex_hull",
]


@dataclass(frozen=True)
class PoolingConfig:
    tol: float = 1e-9
    max_iter: int = 200
    theta_cap: float = 1e3
    hull_check: bool = False


@dataclass(frozen=True)
class PoolingResult:
    probs_updated: np.ndarray
    theta_hat: np.ndarray
    ens_value: float
    residual_norm: float
    iterations: int


def _features(features):
    z = np.asarray(features, dtype=float)
    if z.ndim == 1:
        z = z[:, None]
    if not np.all(np.isfinite(z)):
        raise ValidationError("features contain non-finite values")
    return z


def _log_tilt(p, z, theta):
    a = z @ theta
    return np.log(p) + a


def tilt_probabilities(p, features, theta) -> np.ndarray:
    """Exponentially tilt ``p`` by ``exp(features @ theta)`` and renormalize."""
    p = np.asarray(p, dtype=float)
    z = _features(features)
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    if z.shape != (p.size, theta.size):
        raise ValidationError(
            f"features shape {z.shape} does not match ({p.size}, {theta.size})"
        )
    if np.any(p <= 0):
        raise ValidationError("base probabilities must be strictly positive")
    lw = _log_tilt(p, z, theta)
    q = np.exp(lw - logsumexp(lw))
    return q / q.sum()


# Dual pieces on a precomputed feature matrix ----------------------------------


def _objective(theta, p, z, eta):
    # overflowing trial steps come back as inf/nan and are rejected by the line search
    with np.errstate(over="ignore", invalid="ignore"):
        return logsumexp(np.log(p) + z @ theta) - theta @ eta


def _grad_hess(theta, p, z, eta):
    q = tilt_probabilities(p, z, theta)
    mean = q @ z
    d = z - mean
    hess = (d * q[:, None]).T @ d
    return mean - eta, 0.5 * (hess + hess.T), q


def _scenario_features(ws: WeightedScenarios, views: ExpectationViews):
    return _features(views.features(ws.scenarios))


def dual_objective(theta, ws: WeightedScenarios, views: ExpectationViews) -> float:
    """``log sum_j p_j exp(theta' z_j) - theta' eta``."""
    z = _scenario_features(ws, views)
    return float(_objective(np.atleast_1d(theta), ws.probs, z, views.targets))


def dual_gradient(theta, ws: WeightedScenarios, views: ExpectationViews) -> np.ndarray:
    """Tilted feature mean minus targets."""
    z = _scenario_features(ws, views)
    return _grad_hess(np.atleast_1d(theta), ws.probs, z, views.targets)[0]


def dual_hessian(theta, ws: WeightedScenarios, views: ExpectationViews) -> np.ndarray:
    """Tilted feature covariance."""
    z = _scenario_features(ws, views)
    return _grad_hess(np.atleast_1d(theta), ws.probs, z, views.targets)[1]


def in_convex_hull(features, targets) -> bool:
    """Exact LP test that ``targets`` is a convex combination of feature rows."""
    z = _features(features)
    j = z.shape[0]
    a_eq = np.vstack([z.T, np.ones(j)])
    b_eq = np.append(np.asarray(targets, dtype=float), 1.0)
    res = optimize.linprog(np.zeros(j), A_eq=a_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    return res.status == 0


def _newton_step(g, h):
    # Levenberg shift; grows until the factorization succeeds.
    lam = 1e-12 * max(np.abs(np.diag(h)).max(), 1e-300)
    eye = np.eye(h.shape[0])
    for _ in range(40):
        try:
            c = linalg.cho_factor(h + lam * eye, lower=True)
            return -linalg.cho_solve(c, g)
        except linalg.LinAlgError:
            lam *= 100.0
    return -g


def _polish(theta, p, z, g, h, q, gnorm):
    """One extra Newton step once converged; kept only if it shrinks the gradient."""
    cand = theta + _newton_step(g, h)
    gc, _, qc = _grad_hess(cand, p, z, np.zeros_like(theta))
    gcn = np.abs(gc).max()
    if np.isfinite(gcn) and gcn < gnorm:
        return cand, qc, gcn
    return theta, q, gnorm


def entropy_pool_features(p, features, targets, config: PoolingConfig = PoolingConfig()) -> PoolingResult:
    """Entropy pooling on a precomputed ``(J, k)`` feature matrix."""
    p = np.asarray(p, dtype=float)
    z = _features(features)
    eta = np.atleast_1d(np.asarray(targets, dtype=float))
    if z.shape != (p.size, eta.size):
        raise ValidationError(f"features shape {z.shape} does not match ({p.size}, {eta.size})")
    if np.any(p <= 0):
        raise ValidationError("base probabilities must be strictly positive")
    if config.hull_check and not in_convex_hull(z, eta):
        raise InfeasibleViewsError("targets lie outside the convex hull of the scenario features")

    # Centering at eta keeps the exponent small; the gradient is unchanged.
    zc = z - eta
    zero = np.zeros_like(eta)
    theta = np.zeros(eta.size)
    f = _objective(theta, p, zc, zero)
    history = []
    for it in range(config.max_iter + 1):
        g, h, q = _grad_hess(theta, p, zc, zero)
        gnorm = np.abs(g).max()
        history.append(float(gnorm))
        if gnorm < config.tol:
            theta, q, gnorm = _polish(theta, p, zc, g, h, q, gnorm)
            return PoolingResult(q, theta, ens(q, p), float(gnorm), it)
        if it == config.max_iter:
            break
        step = _newton_step(g, h)
        slope = g @ step
        if slope >= 0:
            step, slope = -g, -(g @ g)
        t = 1.0
        while True:
            cand = theta + t * step
            fc = _objective(cand, p, zc, zero)
            if np.isfinite(fc) and fc <= f + 1e-4 * t * slope:
                break
            # near the optimum the decrease drowns in rounding; judge by the gradient instead
            if np.isfinite(fc) and abs(fc - f) <= 1e-13 * max(1.0, abs(f)):
                if np.abs(_grad_hess(cand, p, zc, zero)[0]).max() < gnorm:
                    break
            t *= 0.5
            if t < 1e-20:
                break
        if t < 1e-20:
            if np.abs(theta).max() > 0.1 * config.theta_cap:
                raise InfeasibleViewsError(
                    f"multipliers diverging (|theta|={np.abs(theta).max():.3g}); "
                    "targets are likely outside the scenario feature hull"
                )
            raise ConvergenceError(
                f"line search stalled with gradient norm {gnorm:.3g} after {it} iterations",
                history,
            )
        theta, f = cand, fc
        if np.abs(theta).max() > config.theta_cap:
            raise InfeasibleViewsError(
                f"multipliers exceeded the cap {config.theta_cap:g} with gradient norm "
                f"{gnorm:.3g}; targets are likely outside the scenario feature hull"
            )
    raise ConvergenceError(
        f"entropy pooling did not converge in {config.max_iter} iterations "
        f"(gradient norm {gnorm:.3g})",
        history,
    )


def entropy_pool(ws: WeightedScenarios, views: ExpectationViews, config: PoolingConfig = PoolingConfig()) -> PoolingResult:
    """Minimum relative entropy reweighting of ``ws`` subject to ``views``."""
    z = _scenario_features(ws, views)
    return entropy_pool_features(ws.probs, z, views.targets, config)
