"""Iterative minimum relative entropy: alternate HMC sampling and entropy pooling.

Each outer step samples equally weighted scenarios from the current tilted
numerator, pools them against the views, and folds the pooling multipliers
into the numerator. The loop stops once pooling barely moves the
probabilities, i.e. the effective number of scenarios exceeds ``1 - delta``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .core import (
    ExpectationViews,
    IterationRecord,
    IterationTrace,
    NormalParams,
    TiltedDensity,
    WeightedScenarios,
    ens,
    weighted_moments,
)
from .errors import InfeasibleViewsError, ValidationError
from .hmc import HmcConfig, run_chains
from .pooling import PoolingConfig, entropy_pool

__all__ = ["IterativeConfig", "IterativeResult", "update_numerator", "run", "converged"]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class IterativeConfig:
    n_scenarios: int = 100_000
    delta: float = 0.01
    max_outer: int = 10
    hmc: HmcConfig = field(default_factory=HmcConfig)
    pool_tol: float = 1e-9
    pool_max_iter: int = 200
    # halve a multiplier increment that would destroy local log-concavity
    safeguard: bool = True
    max_halvings: int = 30

    def __post_init__(self):
        if self.n_scenarios < 2:
            raise ValidationError("n_scenarios must be at least 2")
        if not 0.0 < self.delta < 1.0:
            raise ValidationError("delta must lie in (0, 1)")
        if self.max_outer < 1:
            raise ValidationError("max_outer must be at least 1")


@dataclass(frozen=True)
class StepSummary:
    """Weighted moments and sampler statistics of one outer step."""

    mean: np.ndarray
    cov: np.ndarray
    accept_rate: float
    step_size: float
    update_scale: float = 1.0


@dataclass(frozen=True)
class IterativeResult:
    scenarios: WeightedScenarios
    theta_info_hat: np.ndarray
    final_numerator: TiltedDensity
    trace: IterationTrace
    converged: bool
    steps: tuple = ()


def update_numerator(base: TiltedDensity, theta_hat, views: Optional[ExpectationViews] = None) -> TiltedDensity:
    """Tilt ``base`` further by ``exp(theta_hat' zeta(x))``.

    Multipliers already carried by ``base`` are kept, so successive updates add.
    """
    views = base.views if views is None else views
    theta_hat = np.atleast_1d(np.asarray(theta_hat, dtype=float))
    if not np.all(np.isfinite(theta_hat)):
        raise ValidationError("theta_hat contains non-finite values")
    if views is base.views:
        return base.retilt(base.theta + theta_hat)
    if np.any(base.theta):
        raise ValidationError("cannot re-tilt a density already tilted on different views")
    return TiltedDensity(base.log_numerator, base.grad_log_numerator, theta_hat, views, base.start)


def _locally_concave(td: TiltedDensity, x, h=1e-5) -> bool:
    """Negative-definite Hessian of ``log td`` at ``x``, from central differences of the gradient."""
    x = np.asarray(x, dtype=float)
    n = x.size
    probes = np.concatenate([x + h * np.eye(n), x - h * np.eye(n)])
    with np.errstate(all="ignore"):
        g = td.grad_logpdf(probes)
    if not np.all(np.isfinite(g)):
        return False
    hess = (g[:n] - g[n:]) / (2 * h)
    hess = 0.5 * (hess + hess.T)
    return bool(np.linalg.eigvalsh(hess).max() < 0)


def _damped_update(base, theta_hat, step, views, at, cfg):
    """Add ``step`` to ``theta_hat``, halving it while the numerator loses concavity at ``at``."""
    current = update_numerator(base, theta_hat, views)
    if not cfg.safeguard or not _locally_concave(current, at):
        return theta_hat + step, 1.0
    scale = 1.0
    for _ in range(cfg.max_halvings):
        if _locally_concave(update_numerator(base, theta_hat + scale * step, views), at):
            return theta_hat + scale * step, scale
        scale *= 0.5
    return theta_hat, 0.0


def converged(p_bar, p_uniform, delta) -> bool:
    return ens(p_bar, p_uniform) > 1.0 - delta


def run(
    base: TiltedDensity,
    views: ExpectationViews,
    cfg: IterativeConfig = IterativeConfig(),
    reference: Optional[NormalParams] = None,
    x0=None,
) -> IterativeResult:
    """Run the iterative algorithm from the numerator ``base``.

    With ``reference`` the trace errors are distances of the pooled moments
    from it; otherwise they measure how far pooling moved the moments of the
    freshly sampled scenarios.
    """
    if base.views is not views and np.any(base.theta):
        raise ValidationError("base is tilted on different views")
    theta_hat = np.zeros(views.n_views)
    numerator = update_numerator(base, theta_hat, views)
    pool_cfg = PoolingConfig(tol=cfg.pool_tol, max_iter=cfg.pool_max_iter)
    trace = IterationTrace()
    steps = []
    ws = None
    for step in range(1, cfg.max_outer + 1):
        hcfg = replace(cfg.hmc, n_samples=cfg.n_scenarios).with_seed(cfg.hmc.seed + step)
        chains = run_chains(numerator, hcfg, x0)
        sampled = chains.to_scenarios()
        try:
            pooled = entropy_pool(sampled, views, pool_cfg)
        except InfeasibleViewsError as exc:
            raise InfeasibleViewsError(f"outer step {step}: {exc}") from exc
        ws = sampled.with_probs(pooled.probs_updated)
        mean, cov = weighted_moments(ws)
        theta_hat, scale = _damped_update(base, theta_hat, pooled.theta_hat, views, mean, cfg)
        if scale < 1.0:
            log.info("step %d: multiplier increment scaled by %g", step, scale)
        numerator = update_numerator(base, theta_hat, views)
        if reference is not None:
            ref_mean, ref_cov = reference.mean, reference.cov
        else:
            ref_mean, ref_cov = weighted_moments(sampled)
        trace.append(
            IterationRecord(
                step=step,
                ens=pooled.ens_value,
                mean_error=float(np.linalg.norm(mean - ref_mean)),
                cov_error=float(np.linalg.norm(cov - ref_cov, "fro")),
                delta_theta_norm=float(scale * np.linalg.norm(pooled.theta_hat)),
            )
        )
        steps.append(StepSummary(mean, cov, chains.accept_rate, chains.step_size, scale))
        log.info(
            "step %d: ens=%.4f accept=%.3f |dtheta|=%.3g",
            step, pooled.ens_value, chains.accept_rate, trace[-1].delta_theta_norm,
        )
        if pooled.ens_value > 1.0 - cfg.delta:
            return IterativeResult(ws, theta_hat, numerator, trace, True, tuple(steps))
    return IterativeResult(ws, theta_hat, numerator, trace, False, tuple(steps))
