import json
from pathlib import Path

import numpy as np
import pytest

from mre.cli import main
from mre.io import read_scenarios_csv

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

NORMAL_2D = """
base:
  mean: [0.0, 0.0]
  cov: [[1.0, 0.3], [0.3, 1.0]]
"""
FAST_HMC = """
numerics:
  n_scenarios: 5000
  seed: 3
  hmc: {step_size: 0.2, n_leapfrog: 10, n_burnin: 100, n_chains: 50, jitter: 0.2}
"""


def write(tmp_path, body, name="c.yaml"):
    p = tmp_path / name
    p.write_text(body)
    return p


def report(out):
    return json.loads((out / "report.json").read_text())


def test_analytic_case_study(tmp_path):
    out = tmp_path / "o"
    assert main(["analytic", "--config", str(CONFIGS / "case_study.yaml"), "--out", str(out)]) == 0
    r = report(out)
    assert r["mode"] == "analytic"
    mean = np.array(r["outputs"]["updated"]["mean"])
    corr = np.array(r["outputs"]["updated"]["corr"])
    np.testing.assert_allclose(mean[3:] * 100, 17.29, atol=5e-3)
    assert corr[0, 1] == pytest.approx(-0.8, abs=1e-10)
    assert r["outputs"]["relative_entropy"] > 0
    assert str(out / "report.json") in r["artifacts"]


def test_analytic_identity_views(tmp_path):
    cfg = write(tmp_path, NORMAL_2D + """
views:
  gamma_mu: [[1, 0]]
  mu_info: [0.0]
  gamma_sigma: [[0, 1]]
  sigma2_info: [[1.0]]
""")
    out = tmp_path / "o"
    assert main(["analytic", "--config", str(cfg), "--out", str(out), "--format", "csv"]) == 0
    r = report(out)
    np.testing.assert_allclose(r["outputs"]["updated"]["mean"], [0, 0], atol=1e-14)
    np.testing.assert_allclose(r["outputs"]["updated"]["cov"], [[1, 0.3], [0.3, 1]], atol=1e-14)
    np.testing.assert_allclose(r["outputs"]["feature_multipliers"], 0, atol=1e-14)
    assert (out / "updated_cov.csv").exists()


def test_analytic_bad_sigma(tmp_path, capsys):
    cfg = write(tmp_path, NORMAL_2D + """
views:
  gamma_sigma: [[1, 0], [0, 1]]
  sigma2_info: [[1.0, 2.0], [2.0, 1.0]]
""")
    assert main(["analytic", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert "sigma2_info not positive definite" in capsys.readouterr().err


def test_missing_config_file(tmp_path):
    assert main(["analytic", "--config", str(tmp_path / "nope.yaml"), "--out", str(tmp_path)]) == 2


def test_bad_seed(tmp_path):
    assert main(["case-study", "--seed", str(2**64), "--out", str(tmp_path)]) == 2


def test_pool_three_points(tmp_path):
    out = tmp_path / "o"
    assert main(["pool", "--config", str(CONFIGS / "pool_mean_shift.yaml"), "--out", str(out)]) == 0
    r = report(out)
    assert r["outputs"]["theta_hat"][0] == pytest.approx(np.log((1 + np.sqrt(13)) / 2), abs=1e-9)
    ws = read_scenarios_csv(out / "pooled_scenarios.csv")
    np.testing.assert_allclose(ws.probs, [0.11620, 0.26760, 0.61620], atol=5e-5)


def test_pool_infeasible(tmp_path):
    (tmp_path / "s.csv").write_text("x1\n0\n1\n2\n")
    cfg = write(tmp_path, """
base: {scenarios: s.csv}
views:
  linear: {matrix: [[1.0]], targets: [2.5]}
""")
    assert main(["pool", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 3


def test_iterative_trivial_views(tmp_path):
    cfg = write(tmp_path, NORMAL_2D + FAST_HMC + """
views:
  linear: {matrix: [[1, 0], [0, 1]], targets: [0, 0]}
""")
    out = tmp_path / "o"
    assert main(["iterative", "--config", str(cfg), "--out", str(out)]) == 0
    r = report(out)
    assert len(r["outputs"]["trace"]) == 1
    assert r["outputs"]["max_residual"] <= 1e-8
    for name in ("scenarios.csv", "probabilities.csv", "trace.csv", "ellipses.csv"):
        assert (out / name).exists()
    # effective settings are echoed
    assert r["inputs"]["iterative"]["hmc"]["seed"] == 3
    assert r["inputs"]["iterative"]["n_scenarios"] == 5000


def test_iterative_infeasible_exit_code(tmp_path):
    cfg = write(tmp_path, NORMAL_2D + FAST_HMC + """
views:
  quadratic: [{i: 0, j: 0, target: -1.0}]
""")
    assert main(["iterative", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 3


def test_iterative_non_convergence_exit_code(tmp_path):
    cfg = write(tmp_path, NORMAL_2D + FAST_HMC.replace("seed: 3", "seed: 3\n  max_outer: 1") + """
views:
  linear: {matrix: [[1, 0]], targets: [3.0]}
""")
    out = tmp_path / "o"
    assert main(["iterative", "--config", str(cfg), "--out", str(out)]) == 4
    assert report(out)["outputs"]["converged"] is False


def test_sample_is_reproducible(tmp_path):
    cfg = write(tmp_path, NORMAL_2D + FAST_HMC)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["sample", "--config", str(cfg), "--out", str(a), "--seed", "12"]) == 0
    assert main(["sample", "--config", str(cfg), "--out", str(b), "--seed", "12"]) == 0
    assert (a / "scenarios.csv").read_bytes() == (b / "scenarios.csv").read_bytes()
    assert report(a)["seed"] == 12
    assert read_scenarios_csv(a / "scenarios.csv").n_scenarios == 5000


def test_sample_tilted(tmp_path):
    # exp(x1) tilt of a standard normal moves its mean to 1
    cfg = write(tmp_path, """
base:
  mean: [0.0, 0.0]
  cov: [[1.0, 0.0], [0.0, 1.0]]
  theta: [1.0]
views:
  linear: {matrix: [[1, 0]], targets: [0]}
""" + FAST_HMC)
    out = tmp_path / "o"
    assert main(["sample", "--config", str(cfg), "--out", str(out)]) == 0
    assert report(out)["outputs"]["sample"]["mean"][0] == pytest.approx(1.0, abs=0.1)


def test_case_study_command(tmp_path, capsys):
    cfg = write(tmp_path, "numerics: {n_scenarios: 20000}\n")
    out = tmp_path / "o"
    assert main(["case-study", "--config", str(cfg), "--out", str(out), "--seed", "1"]) == 0
    r = report(out)
    trace = r["outputs"]["iterative"]["trace"]
    assert trace[-1]["ens"] >= 0.98
    assert r["outputs"]["iterative"]["max_residual"] <= 1e-8
    lines = (out / "ellipses.csv").read_text().splitlines()
    assert lines[0] == "stage,i,j,k,x,y"
    base_12 = [ln for ln in lines[1:] if ln.startswith("base,1,2,")]
    assert len(base_12) == 100
    assert "ens" in capsys.readouterr().out
