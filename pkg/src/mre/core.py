"""Domain types and distribution-agnostic diagnostics.

Everything here is a plain value object over numpy arrays. Percentages are
always stored as decimals (10% is 0.10).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import linalg

from .errors import ValidationError

__all__ = [
    "NormalParams",
    "CanonicalNormal",
    "WeightedScenarios",
    "ExpectationViews",
    "MomentViews",
    "TiltedDensity",
    "IterationRecord",
    "IterationTrace",
    "relative_entropy_discrete",
    "ens",
    "relative_entropy_normal",
    "view_residual",
    "expand_moment_views",
    "weighted_moments",
    "normal_numerator",
    "is_positive_definite",
    "linear_views",
    "second_moment_views",
    "stack_views",
]


def _vector(a, name) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1)
    if a.ndim != 1:
        raise ValidationError(f"{name} must be a vector, got shape {a.shape}")
    return a


def _matrix(a, name, ncols=None) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    if a.ndim == 1:
        # an empty block needs to know its width
        a = a.reshape(0, ncols) if a.size == 0 and ncols is not None else a.reshape(1, -1)
    if a.ndim != 2:
        raise ValidationError(f"{name} must be a matrix, got shape {a.shape}")
    return a


def _check_symmetric(a, name, rtol=1e-12):
    if a.shape[0] != a.shape[1]:
        raise ValidationError(f"{name} must be square, got shape {a.shape}")
    scale = max(np.abs(a).max(), 1.0) if a.size else 1.0
    if np.abs(a - a.T).max(initial=0.0) > rtol * scale:
        raise ValidationError(f"{name} is not symmetric")


def is_positive_definite(a) -> bool:
    """Return True when the Cholesky factorization of ``(a + a')/2`` succeeds."""
    a = np.asarray(a, dtype=float)
    if a.size == 0:
        return True
    try:
        linalg.cholesky(0.5 * (a + a.T), lower=True)
    except linalg.LinAlgError:
        return False
    return True


def _full_row_rank(g) -> bool:
    if g.shape[0] == 0:
        return True
    if g.shape[0] > g.shape[1]:
        return False
    s = linalg.svdvals(g)
    return s[-1] > 1e-10 * s[0]


# ---------------------------------------------------------------------------
# Parametric types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NormalParams:
    """Mean vector and covariance matrix of a multivariate normal."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = _vector(self.mean, "mean")
        cov = _matrix(self.cov, "cov")
        if cov.shape != (mean.size, mean.size):
            raise ValidationError(
                f"cov shape {cov.shape} does not match mean length {mean.size}"
            )
        _check_symmetric(cov, "cov")
        if not is_positive_definite(cov):
            raise ValidationError("cov not positive definite")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", 0.5 * (cov + cov.T))

    @property
    def dim(self) -> int:
        return self.mean.size

    @property
    def std(self) -> np.ndarray:
        return np.sqrt(np.diag(self.cov))

    @property
    def corr(self) -> np.ndarray:
        s = self.std
        c = self.cov / np.outer(s, s)
        np.fill_diagonal(c, 1.0)
        return c

    @classmethod
    def from_std_corr(cls, mean, std, corr) -> "NormalParams":
        std = _vector(std, "std")
        corr = _matrix(corr, "corr")
        return cls(mean, corr * np.outer(std, std))

    def logpdf(self, x) -> np.ndarray:
        """Normalized log-density; accepts one point or a batch of rows."""
        x = np.asarray(x, dtype=float)
        chol = linalg.cholesky(self.cov, lower=True)
        z = linalg.solve_triangular(chol, (x - self.mean).T, lower=True)
        maha = np.sum(z * z, axis=0)
        logdet = 2.0 * np.log(np.diag(chol)).sum()
        return -0.5 * (maha + logdet + self.dim * np.log(2 * np.pi))

    def sample(self, size, rng) -> np.ndarray:
        return rng.multivariate_normal(self.mean, self.cov, size=size, method="cholesky")


@dataclass(frozen=True)
class CanonicalNormal:
    """Natural coordinates of a normal: ``theta_mu = S^-1 m`` and ``theta_sigma = -S^-1 / 2``."""

    theta_mu: np.ndarray
    theta_sigma: np.ndarray

    def __post_init__(self):
        tm = _vector(self.theta_mu, "theta_mu")
        ts = _matrix(self.theta_sigma, "theta_sigma")
        if ts.shape != (tm.size, tm.size):
            raise ValidationError("theta_sigma shape does not match theta_mu")
        _check_symmetric(ts, "theta_sigma")
        object.__setattr__(self, "theta_mu", tm)
        object.__setattr__(self, "theta_sigma", 0.5 * (ts + ts.T))

    @property
    def in_domain(self) -> bool:
        """Whether theta_sigma is negative definite."""
        return is_positive_definite(-self.theta_sigma)


# ---------------------------------------------------------------------------
# Scenario representation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class WeightedScenarios:
    """Joint scenarios (one per row) with their probabilities."""

    scenarios: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.scenarios, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        p = _vector(self.probs, "probs")
        if x.ndim != 2 or x.shape[0] != p.size:
            raise ValidationError(
                f"scenarios shape {x.shape} does not match {p.size} probabilities"
            )
        if x.shape[0] < 2 or x.shape[1] < 1:
            raise ValidationError("need at least 2 scenarios of dimension >= 1")
        if not np.all(np.isfinite(x)):
            raise ValidationError("scenarios contain non-finite values")
        if np.any(p <= 0):
            raise ValidationError("probabilities must be strictly positive")
        if abs(p.sum() - 1.0) > 1e-12:
            raise ValidationError(f"probabilities sum to {p.sum():.16g}, not 1")
        object.__setattr__(self, "scenarios", x)
        object.__setattr__(self, "probs", p)

    @classmethod
    def uniform(cls, scenarios) -> "WeightedScenarios":
        x = np.asarray(scenarios, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        return cls(x, np.full(x.shape[0], 1.0 / x.shape[0]))

    @property
    def n_scenarios(self) -> int:
        return self.scenarios.shape[0]

    @property
    def dim(self) -> int:
        return self.scenarios.shape[1]

    def with_probs(self, probs) -> "WeightedScenarios":
        return WeightedScenarios(self.scenarios, probs)


def weighted_moments(ws: WeightedScenarios):
    """Probability-weighted mean vector and covariance matrix."""
    p = ws.probs
    mu = p @ ws.scenarios
    d = ws.scenarios - mu
    cov = (d * p[:, None]).T @ d
    return mu, 0.5 * (cov + cov.T)


# ---------------------------------------------------------------------------
# Views
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExpectationViews:
    """Constraints ``E[feature_map(X)] = targets``.

    ``feature_map`` takes an ``(m, n)`` batch and returns ``(m, k)``.
    ``jacobian``, when given, takes an ``(m, n)`` batch and returns ``(m, k, n)``.
    """

    feature_map: Callable[[np.ndarray], np.ndarray]
    targets: np.ndarray
    jacobian: Optional[Callable[[np.ndarray], np.ndarray]] = None
    labels: Optional[Sequence[str]] = None

    def __post_init__(self):
        t = _vector(self.targets, "targets")
        if t.size < 1:
            raise ValidationError("at least one view is required")
        object.__setattr__(self, "targets", t)
        if self.labels is not None:
            if len(self.labels) != t.size:
                raise ValidationError("labels length does not match targets")
            object.__setattr__(self, "labels", tuple(self.labels))

    @property
    def n_views(self) -> int:
        return self.targets.size

    def features(self, x) -> np.ndarray:
        """Evaluate the feature map; a single point gives a ``(k,)`` vector."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        z = np.asarray(self.feature_map(np.atleast_2d(x)), dtype=float)
        if z.ndim == 1:
            z = z[:, None]
        if z.shape[1] != self.n_views:
            raise ValidationError(
                f"feature map returned {z.shape[1]} columns for {self.n_views} targets"
            )
        return z[0] if single else z

    def jacobian_at(self, x) -> np.ndarray:
        if self.jacobian is None:
            raise ValidationError("these views carry no Jacobian")
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        jac = np.asarray(self.jacobian(np.atleast_2d(x)), dtype=float)
        return jac[0] if single else jac

    def check_jacobian(self, dim, rng=None, n_probe=10, scale=1.0, h=1e-6, rtol=1e-5) -> bool:
        """Compare the Jacobian to central differences at random points."""
        rng = np.random.default_rng(rng)
        for _ in range(n_probe):
            x = scale * rng.standard_normal(dim)
            jac = self.jacobian_at(x)
            num = np.empty_like(jac)
            for i in range(dim):
                e = np.zeros(dim)
                e[i] = h
                num[:, i] = (self.features(x + e) - self.features(x - e)) / (2 * h)
            if not np.allclose(jac, num, rtol=rtol, atol=rtol * max(1.0, np.abs(jac).max())):
                return False
        return True


@dataclass(frozen=True)
class MomentViews:
    """Views on means and covariances of linear combinations.

    ``E[gamma_mu X] = mu_info`` and ``Cov[gamma_sigma X] = sigma2_info``.
    Either block may be empty.
    """

    gamma_mu: np.ndarray
    mu_info: np.ndarray
    gamma_sigma: np.ndarray
    sigma2_info: np.ndarray

    def __post_init__(self):
        gm = _matrix(self.gamma_mu, "gamma_mu")
        n = gm.shape[1]
        gs = _matrix(self.gamma_sigma, "gamma_sigma", ncols=n)
        if gm.shape[0] == 0 and gs.shape[0] > 0:
            n = gs.shape[1]
            gm = gm.reshape(0, n)
        mi = _vector(self.mu_info, "mu_info") if np.size(self.mu_info) else np.zeros(0)
        s2 = np.asarray(self.sigma2_info, dtype=float)
        s2 = s2.reshape(0, 0) if s2.size == 0 else _matrix(s2, "sigma2_info")
        if gs.shape[1] != n:
            raise ValidationError("gamma_mu and gamma_sigma have different widths")
        if mi.size != gm.shape[0]:
            raise ValidationError(
                f"mu_info has length {mi.size}, gamma_mu has {gm.shape[0]} rows"
            )
        if s2.shape != (gs.shape[0], gs.shape[0]):
            raise ValidationError(
                f"sigma2_info shape {s2.shape} does not match gamma_sigma rows {gs.shape[0]}"
            )
        if gm.shape[0] + gs.shape[0] == 0:
            raise ValidationError("no views given")
        if not _full_row_rank(gm):
            raise ValidationError("gamma_mu does not have full row rank")
        if not _full_row_rank(gs):
            raise ValidationError("gamma_sigma does not have full row rank")
        if s2.size:
            _check_symmetric(s2, "sigma2_info")
            if not is_positive_definite(s2):
                raise ValidationError("sigma2_info not positive definite")
        object.__setattr__(self, "gamma_mu", gm)
        object.__setattr__(self, "mu_info", mi)
        object.__setattr__(self, "gamma_sigma", gs)
        object.__setattr__(self, "sigma2_info", 0.5 * (s2 + s2.T))

    @property
    def dim(self) -> int:
        return self.gamma_mu.shape[1]

    @property
    def k_mu(self) -> int:
        return self.gamma_mu.shape[0]

    @property
    def k_sigma(self) -> int:
        return self.gamma_sigma.shape[0]


def expand_moment_views(mv: MomentViews, base_mean) -> ExpectationViews:
    """Rewrite moment views as expectation views.

    The covariance views are turned into second-moment views by pinning
    ``E[gamma_sigma X]`` at ``gamma_sigma @ base_mean``. Features are
    ``(gamma_mu x, gamma_sigma x, upper(gamma_sigma x x' gamma_sigma'))`` with the
    upper triangle taken row by row.
    """
    m = _vector(base_mean, "base_mean")
    if m.size != mv.dim:
        raise ValidationError(f"base_mean has length {m.size}, views have width {mv.dim}")
    gm, gs = mv.gamma_mu, mv.gamma_sigma
    ks = gs.shape[0]
    iu, ju = np.triu_indices(ks)
    lin = np.vstack([gm, gs])
    eta_s = gs @ m
    second = mv.sigma2_info + np.outer(eta_s, eta_s)
    targets = np.concatenate([mv.mu_info, eta_s, second[iu, ju]])
    labels = (
        [f"mu[{i}]" for i in range(gm.shape[0])]
        + [f"sigma[{i}]" for i in range(ks)]
        + [f"sigma2[{i},{j}]" for i, j in zip(iu, ju)]
    )

    def feature_map(x):
        y = x @ gs.T
        return np.hstack([x @ lin.T, y[:, iu] * y[:, ju]])

    def jacobian(x):
        y = x @ gs.T
        jl = np.broadcast_to(lin, (x.shape[0],) + lin.shape)
        jq = y[:, ju, None] * gs[iu][None] + y[:, iu, None] * gs[ju][None]
        return np.concatenate([jl, jq], axis=1)

    return ExpectationViews(feature_map, targets, jacobian, labels)


def linear_views(matrix, targets) -> ExpectationViews:
    """``E[A X] = targets``."""
    a = _matrix(matrix, "matrix")

    def feature_map(x):
        return x @ a.T

    def jacobian(x):
        return np.broadcast_to(a, (x.shape[0],) + a.shape)

    return ExpectationViews(feature_map, targets, jacobian, [f"lin[{i}]" for i in range(a.shape[0])])


def second_moment_views(pairs, targets) -> ExpectationViews:
    """``E[X_i X_j] = target`` for each ``(i, j)`` in ``pairs``."""
    idx = np.asarray(pairs, dtype=int).reshape(-1, 2)
    i, j = idx[:, 0], idx[:, 1]
    if np.any(idx < 0):
        raise ValidationError("second-moment indices must be non-negative")

    def feature_map(x):
        return x[:, i] * x[:, j]

    def jacobian(x):
        jac = np.zeros((x.shape[0], idx.shape[0], x.shape[1]))
        rows = np.arange(idx.shape[0])
        jac[:, rows, i] += x[:, j]
        jac[:, rows, j] += x[:, i]
        return jac

    return ExpectationViews(feature_map, targets, jacobian, [f"x{a}x{b}" for a, b in idx])


def stack_views(*views: ExpectationViews) -> ExpectationViews:
    """Concatenate several sets of views into one."""
    if not views:
        raise ValidationError("nothing to stack")
    if len(views) == 1:
        return views[0]
    has_jac = all(v.jacobian is not None for v in views)

    def feature_map(x):
        return np.hstack([v.features(x) for v in views])

    def jacobian(x):
        return np.concatenate([v.jacobian_at(x) for v in views], axis=1)

    labels = None
    if all(v.labels is not None for v in views):
        labels = [lab for v in views for lab in v.labels]
    return ExpectationViews(
        feature_map,
        np.concatenate([v.targets for v in views]),
        jacobian if has_jac else None,
        labels,
    )


# ---------------------------------------------------------------------------
# Unnormalized densities
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TiltedDensity:
    """Unnormalized density ``g(x) exp(theta' zeta(x))``.

    ``log_numerator`` and ``grad_log_numerator`` act on ``(m, n)`` batches and
    return ``(m,)`` and ``(m, n)``. ``start`` is the default initial point for
    samplers.
    """

    log_numerator: Callable[[np.ndarray], np.ndarray]
    grad_log_numerator: Callable[[np.ndarray], np.ndarray]
    theta: np.ndarray
    views: ExpectationViews
    start: Optional[np.ndarray] = None

    def __post_init__(self):
        th = _vector(self.theta, "theta")
        if th.size != self.views.n_views:
            raise ValidationError(
                f"theta has length {th.size}, views have {self.views.n_views} features"
            )
        if not np.all(np.isfinite(th)):
            raise ValidationError("theta contains non-finite values")
        object.__setattr__(self, "theta", th)

    def logpdf(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        xb = np.atleast_2d(x)
        u = np.asarray(self.log_numerator(xb), dtype=float)
        if np.any(self.theta):
            u = u + self.views.features(xb) @ self.theta
        return u[0] if single else u

    def grad_logpdf(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        xb = np.atleast_2d(x)
        g = np.asarray(self.grad_log_numerator(xb), dtype=float)
        if np.any(self.theta):
            g = g + np.einsum("mkn,k->mn", self.views.jacobian_at(xb), self.theta)
        return g[0] if single else g

    def retilt(self, theta) -> "TiltedDensity":
        return TiltedDensity(self.log_numerator, self.grad_log_numerator, theta, self.views, self.start)


def normal_numerator(base: NormalParams, views: ExpectationViews) -> TiltedDensity:
    """Untilted density whose numerator is the normal ``base`` without its constant."""
    prec = linalg.cho_solve(linalg.cho_factor(base.cov, lower=True), np.eye(base.dim))
    prec = 0.5 * (prec + prec.T)
    mu = base.mean

    def log_g(x):
        d = x - mu
        return -0.5 * np.einsum("mi,ij,mj->m", d, prec, d)

    def grad_log_g(x):
        return -(x - mu) @ prec

    return TiltedDensity(log_g, grad_log_g, np.zeros(views.n_views), views, base.mean)


# ---------------------------------------------------------------------------
# Diagnostics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class IterationRecord:
    step: int
    ens: float
    mean_error: float
    cov_error: float
    delta_theta_norm: float

    def __post_init__(self):
        if not 0.0 < self.ens <= 1.0:
            raise ValidationError(f"ens {self.ens} outside (0, 1]")


@dataclass
class IterationTrace:
    """Per-step diagnostics of the iterative algorithm."""

    records: list = field(default_factory=list)

    def append(self, record: IterationRecord):
        self.records.append(record)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __getitem__(self, i):
        return self.records[i]

    @property
    def ens(self) -> np.ndarray:
        return np.array([r.ens for r in self.records])

    @property
    def mean_error(self) -> np.ndarray:
        return np.array([r.mean_error for r in self.records])

    @property
    def cov_error(self) -> np.ndarray:
        return np.array([r.cov_error for r in self.records])

    def to_rows(self):
        return [
            {
                "step": r.step,
                "ens": r.ens,
                "mean_error": r.mean_error,
                "cov_error": r.cov_error,
                "delta_theta_norm": r.delta_theta_norm,
            }
            for r in self.records
        ]


def relative_entropy_discrete(p_bar, p) -> float:
    """Discrete relative entropy ``sum p_bar log(p_bar / p)``, with ``0 log 0 = 0``."""
    p_bar = _vector(p_bar, "p_bar")
    p = _vector(p, "p")
    if p_bar.size != p.size:
        raise ValidationError(f"length mismatch: {p_bar.size} vs {p.size}")
    if np.any(p <= 0):
        raise ValidationError("reference probabilities must be strictly positive")
    if np.any(p_bar < 0):
        raise ValidationError("probabilities must be nonnegative")
    nz = p_bar > 0
    # Clipped at zero: rounding can leave tiny negatives when p_bar == p.
    return max(float(np.sum(p_bar[nz] * (np.log(p_bar[nz]) - np.log(p[nz])))), 0.0)


def ens(p_bar, p) -> float:
    """Effective number of scenarios as a fraction, ``exp(-relative entropy)``."""
    return float(np.exp(-relative_entropy_discrete(p_bar, p)))


def relative_entropy_normal(n1: NormalParams, n0: NormalParams) -> float:
    """Closed-form relative entropy of ``n1`` with respect to ``n0``."""
    if n1.dim != n0.dim:
        raise ValidationError(f"dimension mismatch: {n1.dim} vs {n0.dim}")
    c0 = linalg.cho_factor(n0.cov, lower=True)
    c1 = linalg.cho_factor(n1.cov, lower=True)
    d = n0.mean - n1.mean
    tr = np.trace(linalg.cho_solve(c0, n1.cov))
    maha = d @ linalg.cho_solve(c0, d)
    logdet0 = 2.0 * np.log(np.diag(c0[0])).sum()
    logdet1 = 2.0 * np.log(np.diag(c1[0])).sum()
    return max(0.5 * (tr + maha - n1.dim + logdet0 - logdet1), 0.0)


def view_residual(ws: WeightedScenarios, views: ExpectationViews) -> np.ndarray:
    """Weighted feature means minus targets; zero when the views hold exactly."""
    z = views.features(ws.scenarios)
    return ws.probs @ z - views.targets
