import csv
import io
import json
import math
from pathlib import Path

import numpy as np
import pytest

from tfkac import cli
from tfkac.bench import (COLUMNS, ConfigError, ConvergenceReport, StudyConfig, check_guardrail, emit,
                         load_config, observed_rates, parse_markdown, run_convergence, run_solver_bench,
                         run_study, to_csv, to_markdown)
from tfkac.grid import ProblemSpec

DATA = Path(__file__).parent / "data"

TINY = """
example: 1
axis: space
scheme: SBD
params: {alpha: 0.3, beta: 0.5, gamma: 0.05, lam: 0.1, nu: 1.5, rho: 1.0}
ladder: [1/2, 1/4]
tau: 1/8
solver: {method: pcg, tol: 1.0e-12}
output: {format: csv}
"""


@pytest.fixture
def tiny(tmp_path):
    p = tmp_path / "tiny.yaml"
    p.write_text(TINY, encoding="utf-8")
    return p


def test_load_config(tiny):
    cfg = load_config(tiny)
    assert cfg.ladder == [0.5, 0.25] and cfg.tau == 0.125
    assert cfg.params["rho"] == 1.0 and cfg.tol == 1e-12 and cfg.format == "csv"
    over = load_config(tiny, {"scheme": "be", "tol": 1e-6, "method": "cg", "format": "markdown"})
    assert (over.scheme, over.tol, over.method, over.format) == ("BE", 1e-6, "cg", "markdown")


@pytest.mark.parametrize("bad", [
    "ladder: [1/4, 1/2]\ntau: 1/8\n",
    "ladder: []\ntau: 1/8\n",
    "ladder: [1/2, 1/4]\n",
    "axis: time\nladder: [1/2, 1/4]\n",
    "ladder: [1/2, 1/4]\ntau: 1/8\nscheme: BDF3\n",
    "ladder: [1/2, 1/4]\ntau: 1/8\nsolver: {method: gmres}\n",
    "ladder: [1/2, 1/4]\ntau: 1/8\ncolour: blue\n",
])
def test_config_errors(tmp_path, bad):
    p = tmp_path / "bad.yaml"
    p.write_text(bad, encoding="utf-8")
    with pytest.raises(ConfigError):
        load_config(p)


def test_guardrail(tiny):
    cfg = load_config(tiny)
    cfg.ladder = [1 / 512]
    with pytest.raises(ConfigError):
        check_guardrail(cfg)
    check_guardrail(cfg, force=True)
    cfg.ladder, cfg.tau = [0.5], 1 / 4000
    with pytest.raises(ConfigError):
        check_guardrail(cfg)


def test_rates():
    r = observed_rates([0.5, 0.25, 0.125], [4.0, 1.0, 0.25])
    assert math.isnan(r[0]) and r[1:] == pytest.approx([2.0, 2.0])
    assert math.isnan(observed_rates([0.5, 0.25], [0.0, 0.0])[1])


def test_golden_tiny_run(tiny):
    report = run_convergence(load_config(tiny))
    got = list(csv.reader(io.StringIO(to_csv(report))))
    want = list(csv.reader(open(DATA / "golden_tiny.csv", encoding="utf-8")))
    assert got[0] == COLUMNS == want[0]
    assert len(got) == 3
    wall = COLUMNS.index("wall_seconds")
    for g, w in zip(got[1:], want[1:]):
        assert len(g) == 8
        assert [c for i, c in enumerate(g) if i != wall] == [c for i, c in enumerate(w) if i != wall]


def test_markdown_round_trip(tiny):
    report = run_convergence(load_config(tiny))
    rows = list(csv.reader(io.StringIO(to_csv(report))))[1:]
    assert parse_markdown(to_markdown(report)) == rows
    md = to_markdown(report)
    assert md.splitlines()[0].startswith("| grid_or_tau | 5.000e-01 | 2.500e-01 |")


def test_emit(tmp_path, tiny):
    report = run_convergence(load_config(tiny))
    out = emit(report, "csv", tmp_path / "t.csv")
    raw = out.read_bytes()
    assert b"\r" not in raw and raw.decode("utf-8").count("\n") == 3
    meta = json.loads((tmp_path / "t.csv.meta.json").read_text())
    assert meta["config"]["ladder"] == [0.5, 0.25]
    # the echoed config reproduces the run
    again = run_convergence(StudyConfig(**meta["config"]))
    wall = COLUMNS.index("wall_seconds")
    strip = lambda rep: [r for r in (list(csv.reader(io.StringIO(to_csv(rep))))) for r in [r[:wall] + r[wall + 1:]]]
    assert strip(again) == strip(report)
    with pytest.raises(ValueError):
        emit(ConvergenceReport([], {}), "csv", tmp_path / "e.csv")
    with pytest.raises(OSError):
        emit(report, "csv", tmp_path / "missing" / "x.csv")


def test_zero_problem_two_rungs():
    spec = ProblemSpec(alpha=0.5, beta=0.5, gamma=0.0, lam=1.0)
    cfg = StudyConfig(example="custom", axis="space", ladder=[0.5, 0.25], tau=0.25, params={})
    report = run_study(cfg, spec=spec, exact=lambda t, x, y: np.zeros(np.shape(x)))
    assert report.values("err_linf") == [0.0, 0.0]
    assert all(math.isnan(v) for v in report.values("rate_l2"))
    assert "nan" in to_csv(report)


def test_single_rung_bench():
    cfg = StudyConfig(example="1", axis="space", ladder=[0.25], tau=0.25, methods=["cg", "pcg"],
                      params=dict(alpha=0.3, beta=0.5, gamma=0.05, lam=0.1, nu=1.5))
    reports = run_solver_bench(cfg)
    assert set(reports) == {"cg", "pcg"}
    for rep in reports.values():
        assert len(rep.rows) == 1
    assert reports["pcg"].rows[0]["iters_mean"] <= reports["cg"].rows[0]["iters_mean"]
    with pytest.raises(ConfigError):
        run_convergence(cfg)


def test_richardson_time_ladder():
    cfg = StudyConfig(example="3", axis="time", ladder=[0.25, 0.125], h=0.25, scheme="BE",
                      params=dict(alpha=0.5, beta=0.5, gamma=0.05, lam=0.1, nu=0.2))
    rep = run_convergence(cfg)
    assert len(rep.rows) == 2 and all(v > 0 for v in rep.values("err_l2"))


def test_cli_exit_codes(tmp_path, tiny, capsys):
    out = tmp_path / "res.csv"
    assert cli.main(["convergence", "--config", str(tiny), "--out", str(out)]) == 0
    assert out.read_text().startswith(",".join(COLUMNS))
    assert cli.main(["bench", "--config", str(tiny), "--out", str(tmp_path / "b.md"), "--format", "markdown"]) == 0
    assert (tmp_path / "b_cg.md").exists() and (tmp_path / "b_pcg.md").exists()
    assert cli.main(["convergence", "--config", str(tmp_path / "nope.yaml")]) == 2
    big = tmp_path / "big.yaml"
    big.write_text(TINY.replace("ladder: [1/2, 1/4]", "ladder: [1/512]"), encoding="utf-8")
    assert cli.main(["bench", "--config", str(big)]) == 2
    assert "FAILED config" in capsys.readouterr().err
    assert cli.main(["convergence", "--config", str(tiny), "--tol", "1e-16"]) == 1
    err = capsys.readouterr().err
    assert "FAILED rung=0.5 method=pcg reason=solver-not-converged" in err


@pytest.mark.parametrize("text", ["params: {alpha: abc}\n", "- a\n- b\n", "ladder: [1/0]\n", "key: [unclosed\n"])
def test_malformed_config(tmp_path, text):
    p = tmp_path / "m.yaml"
    p.write_text(text, encoding="utf-8")
    with pytest.raises(ConfigError):
        load_config(p)
