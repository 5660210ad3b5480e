"""Command-line entry point: ``mre {analytic,pool,iterative,sample,case-study}``.

Exit codes: 0 success, 2 invalid input, 3 infeasible views, 4 no convergence.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from dataclasses import asdict, fields
from pathlib import Path

import numpy as np

from . import io
from .casestudy import CASE_HMC, ellipse_points, run_case_study
from .core import (
    MomentViews,
    NormalParams,
    expand_moment_views,
    linear_views,
    normal_numerator,
    relative_entropy_normal,
    second_moment_views,
    stack_views,
    view_residual,
    weighted_moments,
)
from .errors import ConvergenceError, InfeasibleViewsError, SamplerTuningError, ValidationError
from .hmc import HmcConfig, run_chains
from .iterative import IterativeConfig, run
from .normal import feature_multipliers, solve_moment_views
from .pooling import PoolingConfig, entropy_pool

__all__ = ["main", "build_parser"]

EXIT_OK, EXIT_INVALID, EXIT_INFEASIBLE, EXIT_NOT_CONVERGED = 0, 2, 3, 4

# ---------------------------------------------------------------------------
# Config to library objects
# ---------------------------------------------------------------------------


def _base(cfg) -> NormalParams:
    b = cfg["base"]
    if "mean" not in b:
        raise ValidationError("base.mean is required")
    if "cov" in b:
        if "std" in b or "corr" in b:
            raise ValidationError("give base.cov or base.std with base.corr, not both")
        return NormalParams(b["mean"], b["cov"])
    if "std" in b and "corr" in b:
        return NormalParams.from_std_corr(b["mean"], b["std"], b["corr"])
    raise ValidationError("base needs cov, or std and corr")


def _moment_views(cfg, n) -> MomentViews | None:
    v = cfg["views"]
    keys = ("gamma_mu", "mu_info", "gamma_sigma", "sigma2_info")
    if not any(k in v for k in keys):
        return None
    gs = np.asarray(v.get("gamma_sigma", np.zeros((0, n)))).reshape(-1, n)
    s2 = np.asarray(v.get("sigma2_info", np.zeros((0, 0)))).reshape(gs.shape[0], -1)
    return MomentViews(
        np.asarray(v.get("gamma_mu", np.zeros((0, n)))).reshape(-1, n),
        np.atleast_1d(v.get("mu_info", np.zeros(0))),
        gs,
        s2,
    )


def _expectation_views(cfg, n, pin_default):
    v = cfg["views"]
    parts = []
    mv = _moment_views(cfg, n)
    if mv is not None:
        pin = v.get("pin_mean", pin_default)
        if pin is None:
            raise ValidationError("views.pin_mean is required when no base mean is given")
        parts.append(expand_moment_views(mv, np.atleast_1d(pin)))
    if "linear" in v:
        a = v["linear"]["matrix"]
        if a.shape[1] != n:
            raise ValidationError(f"views.linear.matrix has {a.shape[1]} columns, expected {n}")
        parts.append(linear_views(a, v["linear"]["targets"]))
    if v.get("quadratic"):
        q = v["quadratic"]
        idx = [(i, j) for i, j, _ in q]
        if any(max(p) >= n for p in idx):
            raise ValidationError(f"views.quadratic index out of range for dimension {n}")
        parts.append(second_moment_views(idx, [t for _, _, t in q]))
    if not parts:
        raise ValidationError("no views given")
    return mv, stack_views(*parts)


def _hmc(cfg, seed, defaults: HmcConfig = HmcConfig()) -> HmcConfig:
    h = dict(cfg["numerics"].get("hmc", {}))
    for k in ("n_leapfrog", "n_samples", "n_burnin", "thin", "n_chains"):
        if k in h:
            h[k] = int(h[k])
    for k in ("step_size", "target_accept", "jitter"):
        if k in h:
            h[k] = io.parse_number(h[k], f"numerics.hmc.{k}")
    if "adapt" in h:
        h["adapt"] = bool(h["adapt"])
    known = {f.name for f in fields(HmcConfig)}
    merged = {**asdict(defaults), **{k: v for k, v in h.items() if k in known}}
    merged["seed"] = seed
    return HmcConfig(**merged)


def _seed(cfg, override) -> int:
    if override is not None:
        return int(override)
    return int(cfg["numerics"].get("seed", 0))


def _effective(cfg, **extra):
    out = dict(cfg)
    out.update(extra)
    return out


def _moments_block(mean, cov):
    std = np.sqrt(np.diag(cov))
    return {"mean": mean, "cov": cov, "std": std, "corr": cov / np.outer(std, std)}


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_analytic(cfg, out: Path, seed, fmt) -> tuple[io.RunReport, int]:
    base = _base(cfg)
    mv = _moment_views(cfg, base.dim)
    if mv is None:
        raise ValidationError("analytic mode needs moment views (gamma_mu/mu_info/gamma_sigma/sigma2_info)")
    sol = solve_moment_views(base, mv)
    u = sol.updated
    outputs = {
        "updated": _moments_block(u.mean, u.cov),
        "theta_mu_info": sol.theta_mu_info,
        "theta_sigma_info": sol.theta_sigma_info,
        "feature_multipliers": feature_multipliers(sol, mv),
        "relative_entropy": relative_entropy_normal(u, base),
    }
    artifacts = []
    if fmt == "csv":
        artifacts.append(str(io.write_matrix_csv(out / "updated_mean.csv", u.mean[None])))
        artifacts.append(str(io.write_matrix_csv(out / "updated_cov.csv", u.cov)))
    rep = io.RunReport("analytic", _effective(cfg), outputs, seed=seed, artifacts=artifacts)
    return rep, EXIT_OK


def cmd_pool(cfg, out: Path, seed, fmt):
    path = cfg["base"].get("scenarios")
    if not path:
        raise ValidationError("pool mode needs base.scenarios (a CSV file)")
    ws = io.read_scenarios_csv(path)
    pin = cfg["base"].get("mean")
    if pin is None and "pin_mean" not in cfg["views"]:
        pin = weighted_moments(ws)[0]
    _, views = _expectation_views(cfg, ws.dim, pin)
    pc = PoolingConfig(
        tol=io.parse_number(cfg["numerics"].get("pool_tol", 1e-9)),
        max_iter=int(cfg["numerics"].get("pool_max_iter", 200)),
        hull_check=bool(cfg["numerics"].get("hull_check", False)),
    )
    res = entropy_pool(ws, views, pc)
    pooled = ws.with_probs(res.probs_updated)
    mean, cov = weighted_moments(pooled)
    art = [str(io.write_scenarios_csv(out / "pooled_scenarios.csv", pooled))]
    outputs = {
        "theta_hat": res.theta_hat,
        "labels": list(views.labels or []),
        "ens": res.ens_value,
        "residual_norm": res.residual_norm,
        "iterations": res.iterations,
        "updated": _moments_block(mean, cov),
    }
    return io.RunReport("pool", _effective(cfg, pooling=asdict(pc)), outputs, seed=seed, artifacts=art), EXIT_OK


def _write_trace(out, trace):
    rows = trace.to_rows()
    keys = ["step", "ens", "mean_error", "cov_error", "delta_theta_norm"]
    return [str(io.write_matrix_csv(out / "trace.csv", [[r[k] for k in keys] for r in rows], keys))]


def _write_ellipses(out, ellipses):
    path = out / "ellipses.csv"
    with path.open("w", encoding="utf-8") as fh:
        fh.write("stage,i,j,k,x,y\n")
        for (stage, i, j), pts in ellipses.items():
            for k, (x, y) in enumerate(pts):
                fh.write(f"{stage},{i + 1},{j + 1},{k},{float(x)!r},{float(y)!r}\n")
    return str(path)


def cmd_iterative(cfg, out: Path, seed, fmt):
    base = _base(cfg)
    mv, views = _expectation_views(cfg, base.dim, base.mean)
    num = cfg["numerics"]
    hcfg = _hmc(cfg, seed)
    icfg = IterativeConfig(
        n_scenarios=int(num.get("n_scenarios", 100_000)),
        delta=io.parse_number(num.get("delta", 0.01)),
        max_outer=int(num.get("max_outer", 10)),
        hmc=hcfg,
        pool_tol=io.parse_number(num.get("pool_tol", 1e-9)),
        pool_max_iter=int(num.get("pool_max_iter", 200)),
    )
    reference = None
    if mv is not None and not ("linear" in cfg["views"] or cfg["views"].get("quadratic")):
        try:
            reference = solve_moment_views(base, mv).updated
        except (InfeasibleViewsError, ValidationError):
            reference = None
    res = run(normal_numerator(base, views), views, icfg, reference=reference)
    art = [
        str(io.write_scenarios_csv(out / "scenarios.csv", res.scenarios, with_probs=False)),
        str(io.write_matrix_csv(out / "probabilities.csv", res.scenarios.probs[:, None], ["prob"])),
    ]
    art += _write_trace(out, res.trace)
    stages = {"base": (base.mean, base.cov)}
    for k, st in enumerate(res.steps, start=1):
        stages[f"step{k}"] = (st.mean, st.cov)
    pairs = [(i, j) for i in range(base.dim) for j in range(i + 1, base.dim)][:10]
    ell = {(s, i, j): ellipse_points(m, c, i, j) for s, (m, c) in stages.items() for i, j in pairs}
    art.append(_write_ellipses(out, ell))
    mean, cov = weighted_moments(res.scenarios)
    outputs = {
        "converged": res.converged,
        "theta_info_hat": res.theta_info_hat,
        "labels": list(views.labels or []),
        "trace": res.trace.to_rows(),
        "updated": _moments_block(mean, cov),
        "max_residual": float(np.max(np.abs(view_residual(res.scenarios, views)))),
    }
    rep = io.RunReport(
        "iterative", _effective(cfg, iterative=asdict(icfg)), outputs, seed=seed, artifacts=art
    )
    return rep, EXIT_OK if res.converged else EXIT_NOT_CONVERGED


def cmd_sample(cfg, out: Path, seed, fmt):
    base = _base(cfg)
    hcfg = _hmc(cfg, seed)
    if "n_scenarios" in cfg["numerics"]:
        hcfg = HmcConfig(**{**asdict(hcfg), "n_samples": int(cfg["numerics"]["n_scenarios"])})
    has_views = bool(cfg["views"])
    if has_views:
        _, views = _expectation_views(cfg, base.dim, base.mean)
    else:
        views = linear_views(np.eye(base.dim)[:1], base.mean[:1])
    td = normal_numerator(base, views)
    theta = cfg["base"].get("theta")
    if theta is not None:
        if not has_views:
            raise ValidationError("base.theta needs views defining the features it multiplies")
        td = td.retilt(np.atleast_1d(theta))
    chains = run_chains(td, hcfg)
    ws = chains.to_scenarios()
    art = [str(io.write_scenarios_csv(out / "scenarios.csv", ws, with_probs=False))]
    mean, cov = weighted_moments(ws)
    outputs = {
        "accept_rate": chains.accept_rate,
        "burnin_accept_rate": chains.burnin_accept_rate,
        "step_size": chains.step_size,
        "sample": _moments_block(mean, cov),
    }
    return io.RunReport("sample", _effective(cfg, hmc=asdict(hcfg)), outputs, seed=seed, artifacts=art), EXIT_OK


def cmd_case_study(cfg, out: Path, seed, fmt):
    num = cfg["numerics"]
    hcfg = _hmc(cfg, seed, CASE_HMC)
    r = run_case_study(
        n_scenarios=int(num.get("n_scenarios", 100_000)),
        delta=io.parse_number(num.get("delta", 0.01)),
        seed=seed,
        hmc=hcfg,
        max_outer=int(num.get("max_outer", 10)),
    )
    u = r.analytic.updated
    art = [_write_ellipses(out, r.ellipses)]
    art += _write_trace(out, r.iterative.trace)
    art.append(str(io.write_scenarios_csv(out / "scenarios.csv", r.iterative.scenarios)))
    outputs = {
        "analytic": _moments_block(u.mean, u.cov),
        "analytic_seconds": r.analytic_seconds,
        "iterative": {
            "converged": r.iterative.converged,
            "trace": r.table(),
            "theta_info_hat": r.iterative.theta_info_hat,
            "final": _moments_block(r.iterative.steps[-1].mean, r.iterative.steps[-1].cov),
            "max_residual": r.max_residual(),
            "seconds": r.iterative_seconds,
        },
    }
    inputs = _effective(cfg, base={"mean": r.base.mean, "cov": r.base.cov}, views=asdict(r.views), hmc=asdict(hcfg))
    rep = io.RunReport("case-study", inputs, outputs, seed=seed, artifacts=art)
    return rep, EXIT_OK if r.iterative.converged else EXIT_NOT_CONVERGED


COMMANDS = {
    "analytic": cmd_analytic,
    "pool": cmd_pool,
    "iterative": cmd_iterative,
    "sample": cmd_sample,
    "case-study": cmd_case_study,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mre", description="Minimum relative entropy updates.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", type=Path, required=name != "case-study")
        s.add_argument("--out", type=Path, default=None)
        s.add_argument("--seed", type=int, default=None)
        s.add_argument("--format", choices=("json", "csv"), default=None)
        s.add_argument("-v", "--verbose", action="store_true")
    return p


def _print_summary(rep: io.RunReport):
    o = rep.outputs
    if rep.mode == "case-study":
        print("analytic mean:", np.round(np.asarray(o["analytic"]["mean"]) * 100, 2))
        print("analytic std: ", np.round(np.asarray(o["analytic"]["std"]) * 100, 2))
        print(f"{'step':>4} {'ens':>8} {'|mu err|':>10} {'|cov err|':>10}")
        for r in o["iterative"]["trace"]:
            print(f"{r['step']:>4} {r['ens']:>8.2%} {r['mean_error']:>10.2e} {r['cov_error']:>10.2e}")
    elif rep.mode == "iterative":
        for r in o["trace"]:
            print(f"step {r['step']}: ens={r['ens']:.4f}")
    elif "updated" in o:
        print("updated mean:", np.asarray(o["updated"]["mean"]))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    if args.seed is not None and not 0 <= args.seed < 2**64:
        print("error: --seed must be a 64-bit unsigned integer", file=sys.stderr)
        return EXIT_INVALID
    try:
        if args.config is not None:
            cfg = io.read_config(args.config)
        else:
            cfg = {"base": {}, "views": {}, "numerics": {}, "output": {}}
        fmt = args.format or cfg["output"].get("format", "json")
        out = args.out or Path(cfg["output"].get("dir", "mre-out"))
        out.mkdir(parents=True, exist_ok=True)
        seed = _seed(cfg, args.seed)
        t0 = time.perf_counter()
        rep, code = COMMANDS[args.command](cfg, out, seed, fmt)
        rep.timing["seconds"] = time.perf_counter() - t0
        rep.inputs.setdefault("format", fmt)
        rep.artifacts.append(str(out / "report.json"))
        io.write_report(out / "report.json", rep)
        _print_summary(rep)
        if code == EXIT_NOT_CONVERGED:
            print("error: did not converge within max_outer steps", file=sys.stderr)
        return code
    except InfeasibleViewsError as exc:
        print(f"error: infeasible views: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ConvergenceError, SamplerTuningError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    except (ValidationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
