"""Closed-form minimum relative entropy updates for a normal base.

Views constrain means ``E[gamma_mu X]`` and covariances ``Cov[gamma_sigma X]`` of
linear combinations. The updated distribution is again normal; its covariance
is explicit and its mean follows from the two-step construction that first
fixes ``E[gamma_sigma X]`` and then picks it where the multiplier on that
constraint vanishes.

All inverses go through Cholesky solves.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .core import CanonicalNormal, MomentViews, NormalParams, is_positive_definite
from .errors import ConvergenceError, InfeasibleViewsError, ValidationError

__all__ = [
    "NormalMreSolution",
    "FixedPointConfig",
    "normal_to_canonical",
    "canonical_to_normal",
    "normal_log_partition",
    "sigma_pseudo_inverse",
    "updated_covariance",
    "mu_shift",
    "updated_mean",
    "solve_moment_views",
    "solve_uncorrelated",
    "solve_noncentral_fixed_point",
    "eta_sigma_family",
    "normal_tilt_for_targets",
    "feature_multipliers",
    "canonical_shift",
    "min_entropy_mean",
]


@dataclass(frozen=True)
class NormalMreSolution:
    updated: NormalParams
    theta_mu_info: np.ndarray
    theta_sigma_info: np.ndarray
    eta_sigma_info: np.ndarray
    mu_shift: np.ndarray
    iterations: int = 0


@dataclass(frozen=True)
class FixedPointConfig:
    tol: float = 1e-10
    max_iter: int = 1000
    relaxation: float = 1.0


def _cho(a, name):
    try:
        return linalg.cho_factor(0.5 * (a + a.T), lower=True)
    except linalg.LinAlgError:
        raise InfeasibleViewsError(f"{name} not positive definite") from None


def _check_base(base: NormalParams, mv: MomentViews):
    if base.dim != mv.dim:
        raise ValidationError(f"views have width {mv.dim}, base has dimension {base.dim}")


def normal_to_canonical(params: NormalParams) -> CanonicalNormal:
    c = _cho(params.cov, "cov")
    prec = linalg.cho_solve(c, np.eye(params.dim))
    return CanonicalNormal(linalg.cho_solve(c, params.mean), -0.5 * prec)


def canonical_to_normal(cn: CanonicalNormal) -> NormalParams:
    c = _cho(-2.0 * cn.theta_sigma, "-theta_sigma (updated canonical coordinates leave the domain)")
    n = cn.theta_mu.size
    cov = linalg.cho_solve(c, np.eye(n))
    return NormalParams(linalg.cho_solve(c, cn.theta_mu), 0.5 * (cov + cov.T))


def normal_log_partition(cn: CanonicalNormal) -> float:
    """Log-partition of the normal in natural coordinates (Lebesgue base measure up to ``(2 pi)^(-n/2)``)."""
    c = _cho(-2.0 * cn.theta_sigma, "-theta_sigma")
    logdet = 2.0 * np.log(np.diag(c[0])).sum()
    # -1/4 tm' ts^-1 tm = 1/2 tm' (-2 ts)^-1 tm
    quad = cn.theta_mu @ linalg.cho_solve(c, cn.theta_mu)
    return float(0.5 * quad - 0.5 * logdet)


def sigma_pseudo_inverse(cov, gamma) -> np.ndarray:
    """Right inverse ``cov gamma' (gamma cov gamma')^-1`` of ``gamma``."""
    cov = np.asarray(cov, dtype=float)
    gamma = np.atleast_2d(np.asarray(gamma, dtype=float))
    if gamma.shape[0] == 0:
        return np.zeros((cov.shape[0], 0))
    sg = cov @ gamma.T
    try:
        c = linalg.cho_factor(gamma @ sg, lower=True)
    except linalg.LinAlgError:
        raise ValidationError("gamma is rank deficient (gamma cov gamma' is singular)") from None
    return linalg.cho_solve(c, sg.T).T


def updated_covariance(base: NormalParams, mv: MomentViews) -> np.ndarray:
    _check_base(base, mv)
    if mv.k_sigma == 0:
        return base.cov.copy()
    gs = mv.gamma_sigma
    gd = sigma_pseudo_inverse(base.cov, gs)
    a = gs @ base.cov @ gs.T
    cov = base.cov + gd @ (mv.sigma2_info - a) @ gd.T
    cov = 0.5 * (cov + cov.T)
    if not is_positive_definite(cov):
        raise InfeasibleViewsError("updated covariance not positive definite")
    return cov


def mu_shift(base: NormalParams, mv: MomentViews) -> np.ndarray:
    """Mean of the base tilted only by the quadratic part of the covariance views."""
    _check_base(base, mv)
    if mv.k_sigma == 0:
        return base.mean.copy()
    gs = mv.gamma_sigma
    gd = sigma_pseudo_inverse(base.cov, gs)
    c = _cho(gs @ base.cov @ gs.T, "gamma_sigma cov gamma_sigma'")
    gm = gs @ base.mean
    return base.mean + gd @ (mv.sigma2_info @ linalg.cho_solve(c, gm) - gm)


def _mean_given(cov_bar, shift, mv: MomentViews):
    if mv.k_mu == 0:
        return shift.copy(), np.zeros(0)
    g = mv.gamma_mu
    sg = cov_bar @ g.T
    c = _cho(g @ sg, "gamma_mu cov_bar gamma_mu'")
    theta_mu = linalg.cho_solve(c, mv.mu_info - g @ shift)
    return shift + sg @ theta_mu, theta_mu


def updated_mean(base: NormalParams, mv: MomentViews) -> np.ndarray:
    cov_bar = updated_covariance(base, mv)
    return _mean_given(cov_bar, mu_shift(base, mv), mv)[0]


def _theta_sigma_info(base, mv, sigma2):
    if mv.k_sigma == 0:
        return np.zeros((0, 0))
    gs = mv.gamma_sigma
    a = gs @ base.cov @ gs.T
    ai = linalg.cho_solve(_cho(a, "gamma_sigma cov gamma_sigma'"), np.eye(mv.k_sigma))
    si = linalg.cho_solve(_cho(sigma2, "sigma2_info"), np.eye(mv.k_sigma))
    t = 0.5 * (ai - si)
    return 0.5 * (t + t.T)


def solve_moment_views(base: NormalParams, mv: MomentViews) -> NormalMreSolution:
    """Updated normal and Lagrange multipliers under mean/covariance views."""
    cov_bar = updated_covariance(base, mv)
    shift = mu_shift(base, mv)
    mean, theta_mu = _mean_given(cov_bar, shift, mv)
    return NormalMreSolution(
        updated=NormalParams(mean, cov_bar),
        theta_mu_info=theta_mu,
        theta_sigma_info=_theta_sigma_info(base, mv, mv.sigma2_info),
        eta_sigma_info=mv.gamma_sigma @ mean,
        mu_shift=shift,
    )


def solve_uncorrelated(base: NormalParams, mv: MomentViews) -> NormalMreSolution:
    """Shortcut for views that are uncorrelated under the base.

    Requires ``gamma_mu cov gamma_sigma' = 0``; the mean-view pseudo-inverse
    can then use the base covariance.
    """
    _check_base(base, mv)
    cross = mv.gamma_mu @ base.cov @ mv.gamma_sigma.T
    if cross.size and np.abs(cross).max() > 1e-10:
        raise ValidationError(
            f"views are correlated under the base (max |cross covariance| = {np.abs(cross).max():.3g})"
        )
    cov_bar = updated_covariance(base, mv)
    mu = base.mean
    mean = mu.copy()
    theta_mu = np.zeros(0)
    if mv.k_mu:
        g = mv.gamma_mu
        sg = base.cov @ g.T
        theta_mu = linalg.cho_solve(_cho(g @ sg, "gamma_mu cov gamma_mu'"), mv.mu_info - g @ mu)
        mean = mean + sg @ theta_mu
    correction = mu_shift(base, mv) - mu
    return NormalMreSolution(
        updated=NormalParams(mean + correction, cov_bar),
        theta_mu_info=theta_mu,
        theta_sigma_info=_theta_sigma_info(base, mv, mv.sigma2_info),
        eta_sigma_info=mv.gamma_sigma @ (mean + correction),
        mu_shift=mu + correction,
    )


def solve_noncentral_fixed_point(
    base: NormalParams,
    gamma_mu,
    eta_mu,
    gamma_sigma,
    eta_sigma_sigma,
    config: FixedPointConfig = FixedPointConfig(),
) -> NormalMreSolution:
    """Updated normal under views on non-central moments.

    Views are ``E[gamma_mu X] = eta_mu`` and
    ``E[gamma_sigma X X' gamma_sigma'] = eta_sigma_sigma``. The implied
    ``E[gamma_sigma X]`` is found by fixed-point iteration; ``config.relaxation``
    below 1 damps the update.
    """
    gm = np.atleast_2d(np.asarray(gamma_mu, dtype=float)).reshape(-1, base.dim)
    gs = np.atleast_2d(np.asarray(gamma_sigma, dtype=float)).reshape(-1, base.dim)
    em = np.atleast_1d(np.asarray(eta_mu, dtype=float))
    ess = np.asarray(eta_sigma_sigma, dtype=float).reshape(gs.shape[0], gs.shape[0])
    if np.abs(ess - ess.T).max(initial=0.0) > 1e-12 * max(1.0, np.abs(ess).max(initial=0.0)):
        raise ValidationError("eta_sigma_sigma is not symmetric")

    # When gamma_sigma is spanned by gamma_mu the implied means are known upfront.
    eta = gs @ base.mean
    if gm.shape[0] and gs.shape[0]:
        coef, *_ = np.linalg.lstsq(gm.T, gs.T, rcond=None)
        if np.abs(gm.T @ coef - gs.T).max() < 1e-10:
            eta = coef.T @ em

    omega = config.relaxation
    for it in range(1, config.max_iter + 1):
        s2 = ess - np.outer(eta, eta)
        if not is_positive_definite(s2):
            raise InfeasibleViewsError(
                f"implied covariance of gamma_sigma X lost positive definiteness at iteration {it}"
            )
        mv = MomentViews(gm, em, gs, s2)
        cov_bar = updated_covariance(base, mv)
        shift = mu_shift(base, mv)
        mean, theta_mu = _mean_given(cov_bar, shift, mv)
        eta_new = gs @ mean
        step = np.abs(eta_new - eta).max(initial=0.0)
        eta = (1 - omega) * eta + omega * eta_new
        if step < config.tol:
            break
    else:
        raise ConvergenceError(
            f"fixed-point recursion did not converge in {config.max_iter} iterations (last step {step:.3g})"
        )

    # final solve at the converged point
    s2 = ess - np.outer(eta, eta)
    mv = MomentViews(gm, em, gs, s2)
    cov_bar = updated_covariance(base, mv)
    shift = mu_shift(base, mv)
    mean, theta_mu = _mean_given(cov_bar, shift, mv)
    res_mu = gm @ mean - em
    res_ss = gs @ (cov_bar + np.outer(mean, mean)) @ gs.T - ess
    worst = max(np.abs(res_mu).max(initial=0.0), np.abs(res_ss).max(initial=0.0))
    if worst > 1e-8:
        raise ConvergenceError(f"fixed point reached but constraint residual is {worst:.3g}")
    return NormalMreSolution(
        updated=NormalParams(mean, cov_bar),
        theta_mu_info=theta_mu,
        theta_sigma_info=_theta_sigma_info(base, mv, s2),
        eta_sigma_info=gs @ mean,
        mu_shift=shift,
        iterations=it,
    )


def eta_sigma_family(base: NormalParams, mv: MomentViews, eta_sigma):
    """Member of the family that pins ``E[gamma_sigma X] = eta_sigma``.

    Returns the normal together with the multipliers ``theta_mu`` and
    ``theta_sigma`` on the linear features ``gamma_mu x`` and ``gamma_sigma x``.
    Requires the stacked ``(gamma_mu; gamma_sigma)`` to have full row rank.
    """
    _check_base(base, mv)
    eta_sigma = np.atleast_1d(np.asarray(eta_sigma, dtype=float))
    cov_bar = updated_covariance(base, mv)
    shift = mu_shift(base, mv)
    g = np.vstack([mv.gamma_mu, mv.gamma_sigma])
    sg = cov_bar @ g.T
    c = _cho(g @ sg, "stacked gamma cov_bar gamma'")
    rhs = np.concatenate([mv.mu_info, eta_sigma]) - g @ shift
    lam = linalg.cho_solve(c, rhs)
    mean = shift + sg @ lam
    return NormalParams(mean, cov_bar), lam[: mv.k_mu], lam[mv.k_mu:]


def _upper_to_sym(v, k):
    iu, ju = np.triu_indices(k)
    t = np.zeros((k, k))
    t[iu, ju] = v
    t = t + t.T
    t[np.diag_indices(k)] /= 2.0
    return t


def normal_tilt_for_targets(base: NormalParams, gamma_mu, gamma_sigma, targets):
    """Tilt of a normal base meeting expectation targets on expanded moment features.

    ``targets`` follow the ordering of :func:`mre.core.expand_moment_views`:
    linear means, then pinned ``E[gamma_sigma X]``, then the upper triangle of
    ``E[gamma_sigma X X' gamma_sigma']``. Returns the tilted normal and its
    multipliers in the same feature ordering (off-diagonal quadratic
    multipliers count each pair once).
    """
    gm = np.asarray(gamma_mu, dtype=float).reshape(-1, base.dim)
    gs = np.asarray(gamma_sigma, dtype=float).reshape(-1, base.dim)
    km, ks = gm.shape[0], gs.shape[0]
    t = np.asarray(targets, dtype=float)
    eta_mu, eta_s = t[:km], t[km:km + ks]
    second = _upper_to_sym(t[km + ks:], ks)
    s2 = second - np.outer(eta_s, eta_s)
    mv = MomentViews(gm, eta_mu, gs, s2)
    dist, th_mu, th_s = eta_sigma_family(base, mv, eta_s)
    th_ss = _theta_sigma_info(base, mv, s2)
    iu, ju = np.triu_indices(ks)
    quad = np.where(iu == ju, 1.0, 2.0) * th_ss[iu, ju]
    lin = np.concatenate([th_mu, th_s])
    return dist, np.concatenate([lin, quad])


def feature_multipliers(solution: NormalMreSolution, mv: MomentViews) -> np.ndarray:
    """Multipliers of ``solution`` in the ordering of :func:`expand_moment_views`."""
    ks = mv.k_sigma
    iu, ju = np.triu_indices(ks)
    t = solution.theta_sigma_info
    quad = np.where(iu == ju, 1.0, 2.0) * t[iu, ju] if ks else np.zeros(0)
    return np.concatenate([solution.theta_mu_info, np.zeros(ks), quad])


def canonical_shift(mv: MomentViews, theta):
    """Change in natural coordinates produced by feature multipliers ``theta``."""
    km, ks = mv.k_mu, mv.k_sigma
    theta = np.asarray(theta, dtype=float)
    lin = np.vstack([mv.gamma_mu, mv.gamma_sigma])
    d_mu = lin.T @ theta[: km + ks]
    t = _upper_to_sym(theta[km + ks:], ks)
    # off-diagonal entries carry the pair multiplier once, split symmetrically
    off = ~np.eye(ks, dtype=bool)
    t[off] /= 2.0
    d_sigma = mv.gamma_sigma.T @ t @ mv.gamma_sigma
    return d_mu, 0.5 * (d_sigma + d_sigma.T)


def min_entropy_mean(base: NormalParams, mv: MomentViews) -> np.ndarray:
    """Mean of the lowest relative entropy normal among all normals meeting the views.

    For normals the relative entropy splits into a mean part and a covariance
    part, so the mean solves ``min (m - mu)' cov^-1 (m - mu)`` subject to
    ``gamma_mu m = mu_info`` alone. It coincides with :func:`updated_mean` when
    ``E[gamma_sigma X]`` is fixed by the mean views.
    """
    _check_base(base, mv)
    if mv.k_mu == 0:
        return base.mean.copy()
    gd = sigma_pseudo_inverse(base.cov, mv.gamma_mu)
    return base.mean + gd @ (mv.mu_info - mv.gamma_mu @ base.mean)
