"""Hamiltonian Monte Carlo for unnormalized tilted densities.

Chains run in lockstep: positions are an ``(n_chains, n)`` array and every
leapfrog step is one vectorized gradient evaluation. The mass matrix is the
identity.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .core import TiltedDensity, WeightedScenarios
from .errors import SamplerTuningError, ValidationError

__all__ = [
    "HmcConfig",
    "HmcRun",
    "log_density",
    "log_density_gradient",
    "leapfrog",
    "run_chains",
    "sample",
    "effective_sample_size",
]


@dataclass(frozen=True)
class HmcConfig:
    step_size: float = 0.1
    n_leapfrog: int = 20
    n_samples: int = 10_000
    n_burnin: int = 1_000
    thin: int = 1
    seed: int = 0
    target_accept: float = 0.8
    adapt: bool = False
    n_chains: int = 1
    # uniform step-size jitter, as a fraction of step_size; breaks periodic orbits
    jitter: float = 0.0

    def __post_init__(self):
        if not self.step_size > 0:
            raise ValidationError("step_size must be positive")
        if self.n_leapfrog < 1 or self.n_samples < 1 or self.thin < 1 or self.n_chains < 1:
            raise ValidationError("n_leapfrog, n_samples, thin and n_chains must be >= 1")
        if self.n_burnin < 0:
            raise ValidationError("n_burnin must be >= 0")
        if not 0.0 < self.target_accept < 1.0:
            raise ValidationError("target_accept must lie in (0, 1)")
        if not 0.0 <= self.jitter < 1.0:
            raise ValidationError("jitter must lie in [0, 1)")
        if not 0 <= int(self.seed) < 2**64:
            raise ValidationError("seed must be a 64-bit unsigned integer")

    def with_seed(self, seed) -> "HmcConfig":
        return replace(self, seed=int(seed) % 2**64)


@dataclass(frozen=True)
class HmcRun:
    """Raw chain output; ``draws`` has shape ``(n_chains, n_draws, n)``."""

    draws: np.ndarray
    accept_rate: float
    burnin_accept_rate: float
    step_size: float
    n_samples: int

    def to_scenarios(self) -> WeightedScenarios:
        x = self.draws.reshape(-1, self.draws.shape[-1])[: self.n_samples]
        return WeightedScenarios.uniform(x)


def log_density(td: TiltedDensity, x) -> np.ndarray:
    """``theta' zeta(x) + log g(x)``; finite everywhere it is asked for."""
    u = td.logpdf(x)
    if not np.all(np.isfinite(u)):
        bad = np.atleast_2d(x)[~np.isfinite(np.atleast_1d(u))][0]
        raise ValidationError(f"log-density not finite at x={bad}")
    return u


def log_density_gradient(td: TiltedDensity, x) -> np.ndarray:
    """``grad log g(x) + J_zeta(x)' theta``."""
    g = td.grad_logpdf(x)
    if not np.all(np.isfinite(g)):
        raise ValidationError(f"log-density gradient not finite at x={x}")
    return g


def leapfrog(td: TiltedDensity, x, momentum, step_size, n_steps):
    """Integrate Hamiltonian dynamics with potential ``-log_density``.

    Works on one point or a batch of rows. ``step_size`` may be a scalar or a
    per-row array.
    """
    x = np.array(x, dtype=float)
    r = np.array(momentum, dtype=float)
    eps = np.asarray(step_size, dtype=float)
    if eps.ndim == 1 and x.ndim == 2:
        eps = eps[:, None]
    with np.errstate(over="ignore", invalid="ignore"):
        r = r + 0.5 * eps * td.grad_logpdf(x)
        for i in range(n_steps):
            x = x + eps * r
            if i < n_steps - 1:
                r = r + eps * td.grad_logpdf(x)
        r = r + 0.5 * eps * td.grad_logpdf(x)
    return x, r


def _hamiltonian(td, x, r):
    with np.errstate(over="ignore", invalid="ignore"):
        h = -td.logpdf(x) + 0.5 * np.sum(r * r, axis=-1)
    return np.where(np.isfinite(h), h, np.inf)


class _DualAveraging:
    """Step-size adaptation toward a target acceptance probability."""

    def __init__(self, eps0, target, gamma=0.05, t0=10.0, kappa=0.75):
        self.mu = np.log(10 * eps0)
        self.target = target
        self.gamma, self.t0, self.kappa = gamma, t0, kappa
        self.hbar = 0.0
        self.log_eps = np.log(eps0)
        self.log_eps_bar = 0.0
        self.t = 0

    def update(self, accept_prob):
        self.t += 1
        w = 1.0 / (self.t + self.t0)
        self.hbar = (1 - w) * self.hbar + w * (self.target - accept_prob)
        self.log_eps = self.mu - np.sqrt(self.t) / self.gamma * self.hbar
        eta = self.t ** (-self.kappa)
        self.log_eps_bar = eta * self.log_eps + (1 - eta) * self.log_eps_bar
        return float(np.exp(self.log_eps))

    @property
    def final(self):
        return float(np.exp(self.log_eps_bar))


def run_chains(td: TiltedDensity, cfg: HmcConfig, x0=None) -> HmcRun:
    """Run ``cfg.n_chains`` chains and keep ``cfg.n_samples`` draws in total."""
    if x0 is None:
        x0 = td.start
    if x0 is None:
        raise ValidationError("no starting point: pass x0 or build the density with a start")
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    n = x0.size
    c = cfg.n_chains
    per_chain = -(-cfg.n_samples // c)
    rng = np.random.default_rng(cfg.seed)

    x = np.tile(x0, (c, 1))
    u0 = td.logpdf(x)
    if not np.all(np.isfinite(u0)):
        raise ValidationError(f"log-density not finite at x0={x0}")

    eps = cfg.step_size
    adapter = _DualAveraging(eps, cfg.target_accept) if cfg.adapt else None
    draws = np.empty((c, per_chain, n))
    n_iter = cfg.n_burnin + per_chain * cfg.thin
    acc_burn = acc_keep = 0.0
    kept = 0
    for it in range(n_iter):
        r = rng.standard_normal((c, n))
        if cfg.jitter:
            step = eps * (1.0 + cfg.jitter * rng.uniform(-1.0, 1.0, size=c))
        else:
            step = np.full(c, eps)
        h0 = _hamiltonian(td, x, r)
        xn, rn = leapfrog(td, x, r, step, cfg.n_leapfrog)
        h1 = _hamiltonian(td, xn, rn)
        with np.errstate(invalid="ignore", over="ignore"):
            log_ratio = np.where(np.isfinite(h1), h0 - h1, -np.inf)
        accept_prob = np.exp(np.minimum(log_ratio, 0.0))
        accept = rng.uniform(size=c) < accept_prob
        x = np.where(accept[:, None], xn, x)
        if it < cfg.n_burnin:
            acc_burn += accept.mean()
            if adapter is not None:
                eps = adapter.update(float(accept_prob.mean()))
                if it == cfg.n_burnin - 1:
                    eps = adapter.final
        else:
            acc_keep += accept.mean()
            if (it - cfg.n_burnin + 1) % cfg.thin == 0:
                draws[:, kept] = x
                kept += 1

    burn_rate = acc_burn / cfg.n_burnin if cfg.n_burnin else float("nan")
    keep_rate = acc_keep / (n_iter - cfg.n_burnin)
    if cfg.n_burnin and burn_rate < 0.05:
        raise SamplerTuningError(
            f"acceptance rate {burn_rate:.3f} during burn-in is below 0.05; reduce step_size "
            f"(currently {eps:.3g}) or enable adaptation",
            {"burnin_accept_rate": burn_rate, "step_size": eps},
        )
    return HmcRun(draws, keep_rate, burn_rate, eps, cfg.n_samples)


def sample(td: TiltedDensity, cfg: HmcConfig, x0=None) -> WeightedScenarios:
    """Draw ``cfg.n_samples`` equally weighted scenarios from ``td``."""
    return run_chains(td, cfg, x0).to_scenarios()


def _autocov(x):
    # x: (chains, draws); FFT autocovariance per chain, biased estimator
    m = x.shape[1]
    x = x - x.mean(axis=1, keepdims=True)
    nfft = 1 << (2 * m - 1).bit_length()
    f = np.fft.rfft(x, n=nfft, axis=1)
    ac = np.fft.irfft(f * np.conj(f), n=nfft, axis=1)[:, :m]
    return ac / m


def effective_sample_size(draws) -> float:
    """Multi-chain effective sample size of a scalar quantity.

    ``draws`` has shape ``(n_chains, n_draws)``. Autocorrelations are combined
    across chains and truncated with Geyer's initial monotone sequence.
    """
    x = np.atleast_2d(np.asarray(draws, dtype=float))
    c, m = x.shape
    if m < 4:
        return float(c * m)
    acov = _autocov(x)
    chain_var = acov[:, 0] * m / (m - 1)
    w = chain_var.mean()
    var_plus = w * (m - 1) / m
    if c > 1:
        var_plus += x.mean(axis=1).var(ddof=1)
    if var_plus <= 0:
        return float(c * m)
    rho = 1.0 - (w - acov.mean(axis=0)) / var_plus
    rho[0] = 1.0
    # pair sums, truncated at the first negative, forced monotone
    n_pairs = (m - 1) // 2
    pairs = rho[0: 2 * n_pairs: 2] + rho[1: 2 * n_pairs: 2]
    neg = np.nonzero(pairs < 0)[0]
    if neg.size:
        pairs = pairs[: neg[0]]
    pairs = np.minimum.accumulate(pairs)
    tau = -1.0 + 2.0 * pairs.sum()
    tau = max(tau, 1.0 / np.log10(c * m + 10))
    return float(c * m / tau)
