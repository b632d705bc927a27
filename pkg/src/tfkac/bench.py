"""Convergence studies, solver benchmarks and table output."""
from __future__ import annotations

import csv
import io
import json
import math
import platform
import time
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from . import __version__
from .driver import SolverConfig, StepFailure, l2_norm, linf_norm, restrict_to_coarse, solve
from .grid import Grid, ProblemSpec
from .oracle import example1_spec, example3_spec, exact_solution_example1
from .special import SCHEMES

COLUMNS = ["grid_or_tau", "err_linf", "rate_linf", "err_l2", "rate_l2",
           "iters_mean", "wall_seconds", "converged"]
MAX_N = 256
MAX_L = 2000


class ConfigError(ValueError):
    pass


class RungFailure(RuntimeError):
    def __init__(self, rung, reason):
        super().__init__(f"rung {rung}: {reason}")
        self.rung = rung
        self.reason = reason


def _number(v) -> float:
    if isinstance(v, str):
        return float(Fraction(v.strip()))
    return float(v)


@dataclass
class StudyConfig:
    example: str = "1"
    axis: str = "space"
    scheme: str = "SBD"
    params: dict = field(default_factory=dict)
    ladder: list = field(default_factory=list)
    h: Optional[float] = None
    tau: Optional[float] = None
    method: str = "pcg"
    methods: list = field(default_factory=lambda: ["cg", "pcg"])
    tol: float = 1e-9
    max_iter: int = 2000
    warm_start: bool = False
    out: Optional[str] = None
    format: str = "csv"
    cache_dir: Optional[str] = None

    def validate(self) -> None:
        if self.example not in ("1", "3", "custom"):
            raise ConfigError(f"example must be 1, 3 or custom, got {self.example!r}")
        if self.axis not in ("space", "time"):
            raise ConfigError(f"axis must be space or time, got {self.axis!r}")
        if self.scheme not in SCHEMES:
            raise ConfigError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.format not in ("csv", "markdown"):
            raise ConfigError(f"format must be csv or markdown, got {self.format!r}")
        if len(self.ladder) < 1:
            raise ConfigError("ladder is empty")
        if any(b >= a for a, b in zip(self.ladder, self.ladder[1:])):
            raise ConfigError("ladder must be strictly decreasing")
        if self.axis == "space" and self.tau is None:
            raise ConfigError("a space ladder needs a fixed tau")
        if self.axis == "time" and self.h is None:
            raise ConfigError("a time ladder needs a fixed h")
        try:
            for m in [self.method] + list(self.methods):
                SolverConfig(m, self.tol)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    @property
    def solver(self) -> SolverConfig:
        return SolverConfig(self.method, self.tol, self.max_iter, self.warm_start)

    def to_dict(self) -> dict:
        return asdict(self)


def load_config(path=None, overrides: dict | None = None) -> StudyConfig:
    """Read a YAML study description; ``overrides`` (CLI flags) win over file keys."""
    raw: dict = {}
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            try:
                raw = yaml.safe_load(fh) or {}
            except yaml.YAMLError as exc:
                raise ConfigError(f"{path}: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    try:
        return _build_config(dict(raw), overrides)
    except ConfigError:
        raise
    except (TypeError, ValueError, ZeroDivisionError) as exc:
        raise ConfigError(str(exc)) from None


def _build_config(raw: dict, overrides: dict | None) -> StudyConfig:
    solver = raw.pop("solver", {}) or {}
    output = raw.pop("output", {}) or {}
    raw.update({k: v for k, v in solver.items()})
    raw.update({k: v for k, v in output.items()})
    for k, v in (overrides or {}).items():
        if v is not None:
            raw[k] = v
    known = set(StudyConfig.__dataclass_fields__)
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if "example" in raw:
        raw["example"] = str(raw["example"])
    if "scheme" in raw:
        raw["scheme"] = str(raw["scheme"]).upper()
    if "ladder" in raw:
        raw["ladder"] = [_number(v) for v in raw["ladder"]]
    for k in ("h", "tau", "tol"):
        if raw.get(k) is not None:
            raw[k] = _number(raw[k])
    if "params" in raw:
        raw["params"] = {k: (None if v is None else _number(v)) for k, v in raw["params"].items()}
    cfg = StudyConfig(**raw)
    cfg.validate()
    return cfg


def _runs(cfg: StudyConfig):
    """``(N, L)`` per rung, plus the extra coarse run Richardson errors need."""
    p = cfg.params
    l, T = p.get("l", 1.0), p.get("T", 1.0)

    def N_of(h):
        N = l / h
        if abs(N - round(N)) > 1e-9:
            raise ConfigError(f"h={h} does not divide l={l}")
        return int(round(N))

    def L_of(tau):
        L = T / tau
        if abs(L - round(L)) > 1e-9:
            raise ConfigError(f"tau={tau} does not divide T={T}")
        return int(round(L))

    if cfg.axis == "space":
        runs = [(N_of(h), L_of(cfg.tau)) for h in cfg.ladder]
    else:
        runs = [(N_of(cfg.h), L_of(t)) for t in cfg.ladder]
    extra = None
    if cfg.example == "3":
        N0, L0 = runs[0]
        extra = (N0 // 2, L0) if cfg.axis == "space" else (N0, L0 // 2)
        if cfg.axis == "space" and N0 % 2:
            raise ConfigError("Richardson space ladder needs an even first N")
        if cfg.axis == "time" and L0 % 2:
            raise ConfigError("Richardson time ladder needs an even first L")
    return runs, extra


def check_guardrail(cfg: StudyConfig, force: bool = False) -> None:
    runs, extra = _runs(cfg)
    for N, L in runs + ([extra] if extra else []):
        if not force and (N > MAX_N or L > MAX_L):
            raise ConfigError(f"run with N={N}, L={L} exceeds the desk limits "
                              f"(N <= {MAX_N}, L <= {MAX_L}); pass --force to run it")


def make_spec(cfg: StudyConfig) -> ProblemSpec:
    p = dict(cfg.params)
    common = dict(alpha=p["alpha"], beta=p["beta"], gamma=p.get("gamma", 0.0), lam=p["lam"],
                  nu=p["nu"], rho=p.get("rho", 0.0), T=p.get("T", 1.0))
    if cfg.example == "1":
        return example1_spec(sigma=p.get("sigma"), **common)
    if cfg.example == "3":
        return example3_spec(sigma=p.get("sigma", 2.0), **common)
    raise ConfigError("custom examples are built in code; pass a ProblemSpec to run_study")


@dataclass
class ConvergenceReport:
    rows: list
    metadata: dict

    def values(self, column: str) -> list:
        return [r[column] for r in self.rows]

    @property
    def converged(self) -> bool:
        return all(r["converged"] for r in self.rows)


def observed_rates(x, e) -> list:
    """``log(e_{k-1}/e_k) / log(x_{k-1}/x_k)``; NaN for the first rung or zero errors."""
    out = [math.nan]
    for k in range(1, len(e)):
        if e[k] > 0 and e[k - 1] > 0:
            out.append(math.log(e[k - 1] / e[k]) / math.log(x[k - 1] / x[k]))
        else:
            out.append(math.nan)
    return out


def run_study(cfg: StudyConfig, spec: ProblemSpec | None = None, exact=None,
              solver: SolverConfig | None = None) -> ConvergenceReport:
    """Run every rung of the ladder and tabulate errors and rates.

    ``exact(t, x, y)`` gives the reference solution; without it errors are
    differences to the next coarser run, measured on the coarser nodes.
    """
    cfg.validate()
    spec = spec or make_spec(cfg)
    solver = solver or cfg.solver
    if exact is None and cfg.example == "1":
        nu = cfg.params["nu"]
        exact = lambda t, x, y: exact_solution_example1(nu, spec, t, x, y)
    runs, extra = _runs(cfg)
    if exact is None and extra is None:
        extra = (runs[0][0] // 2, runs[0][1]) if cfg.axis == "space" else (runs[0][0], runs[0][1] // 2)
    l = cfg.params.get("l", 1.0)

    def run(N, L, rung):
        t0 = time.perf_counter()
        try:
            res = solve(spec, Grid(l, N), cfg.scheme, L, solver, cache_dir=cfg.cache_dir,
                        raise_on_failure=False)
        except StepFailure as exc:  # pragma: no cover - raise_on_failure is off
            raise RungFailure(rung, str(exc)) from exc
        return res, time.perf_counter() - t0

    rows = []
    prev = run(*extra, "reference")[0] if exact is None else None
    for rung, (N, L) in zip(cfg.ladder, runs):
        res, wall = run(N, L, rung)
        grid = res.grid
        if exact is not None:
            X, Y = grid.nodes()
            err = res.final_field - exact(spec.T, X, Y)
            norm_grid = grid
        elif cfg.axis == "space":
            err = prev.final_field - restrict_to_coarse(res.final_field, grid, prev.grid)
            norm_grid = prev.grid
        else:
            err = prev.final_field - res.final_field
            norm_grid = grid
        rows.append(dict(grid_or_tau=rung, err_linf=linf_norm(err), err_l2=l2_norm(err, norm_grid),
                         iters_mean=res.iters_mean, wall_seconds=wall, converged=res.converged))
        prev = res
    x = [r["grid_or_tau"] for r in rows]
    for col in ("linf", "l2"):
        for r, rate in zip(rows, observed_rates(x, [r[f"err_{col}"] for r in rows])):
            r[f"rate_{col}"] = rate
    rows = [{c: r[c] for c in COLUMNS} for r in rows]
    meta = {"config": cfg.to_dict(), "solver": asdict(solver), "version": __version__,
            "numpy": np.__version__, "python": platform.python_version()}
    return ConvergenceReport(rows, meta)


def run_convergence(cfg: StudyConfig) -> ConvergenceReport:
    if len(cfg.ladder) < 2:
        raise ConfigError("a convergence ladder needs at least two rungs")
    return run_study(cfg)


def run_solver_bench(cfg: StudyConfig) -> dict:
    """The same ladder once per solver method; returns ``{method: report}``."""
    out = {}
    for method in cfg.methods:
        solver = SolverConfig(method, cfg.tol, cfg.max_iter, cfg.warm_start)
        report = run_study(cfg, solver=solver)
        report.metadata["method"] = method
        out[method] = report
    return out


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    v = float(v)
    if math.isnan(v):
        return "nan"
    return f"{v:.3e}"


def format_rows(report: ConvergenceReport) -> list:
    return [[_fmt(r[c]) for c in COLUMNS] for r in report.rows]


def to_csv(report: ConvergenceReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    w.writerows(format_rows(report))
    return buf.getvalue()


_MD_ROWS = [("$l^\\infty$", "err_linf"), ("Rate", "rate_linf"), ("$l^2$", "err_l2"),
            ("Rate", "rate_l2"), ("iterations", "iters_mean"), ("time(s)", "wall_seconds"),
            ("converged", "converged")]


def to_markdown(report: ConvergenceReport) -> str:
    """Pipe table with one column per rung, errors and rates as rows."""
    cells = {c: [row[i] for row in format_rows(report)] for i, c in enumerate(COLUMNS)}
    rate_cells = {c: ["" if v == "nan" else v for v in cells[c]] for c in ("rate_linf", "rate_l2")}
    head = "| grid_or_tau | " + " | ".join(cells["grid_or_tau"]) + " |"
    sep = "|---" * (len(report.rows) + 1) + "|"
    lines = [head, sep]
    for label, col in _MD_ROWS:
        vals = rate_cells.get(col, cells[col])
        lines.append(f"| {label} | " + " | ".join(vals) + " |")
    return "\n".join(lines) + "\n"


def parse_markdown(text: str) -> list:
    """Recover the CSV cell strings from ``to_markdown`` output."""
    lines = [ln for ln in text.strip().splitlines() if ln.startswith("|")]
    table = [[c.strip() for c in ln.strip("|").split("|")] for ln in lines]
    grid = table[0][1:]
    body = {col: table[i + 2][1:] for i, (_, col) in enumerate(_MD_ROWS)}
    rows = []
    for k in range(len(grid)):
        row = {"grid_or_tau": grid[k]}
        for col, vals in body.items():
            row[col] = vals[k] if vals[k] != "" else "nan"
        rows.append([row[c] for c in COLUMNS])
    return rows


def emit(report: ConvergenceReport, fmt: str, path) -> Path:
    """Write the table (and a ``.meta.json`` sidecar with the config echo)."""
    if not report.rows:
        raise ValueError("report has no rows")
    if fmt not in ("csv", "markdown"):
        raise ValueError(f"unknown format {fmt!r}")
    path = Path(path)
    text = to_csv(report) if fmt == "csv" else to_markdown(report)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    with open(path.with_name(path.name + ".meta.json"), "w", encoding="utf-8", newline="\n") as fh:
        json.dump(report.metadata, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")
    return path
