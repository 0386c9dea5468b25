"""Epsilon sweeps, rate fitting, uniformity monitors and report files."""

import csv
import hashlib
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from .cell_solver import solve_cell_problems
from .corrector_expansion import PhiStrategy, build_phi, build_w, expansion_errors
from .domain_solver import (
    ProblemData,
    psi_deviation,
    solve_boundary_corrector,
    solve_homogenized_problem,
    solve_oscillating,
)
from .errors import HomlabError
from .grid import grid_norm
from .periodic_fields import build_preset

__all__ = [
    "SweepConfig",
    "ConvergenceReport",
    "RateFit",
    "DATA_SETS",
    "make_problem_data",
    "run_convergence_sweep",
    "fit_rate",
    "emit_report",
    "CSV_COLUMNS",
]

log = logging.getLogger(__name__)

CSV_COLUMNS = (
    "eps",
    "l2_diff",
    "h1_w",
    "l2_w",
    "layer_energy",
    "h1_u_eps",
    "max_grad_u_eps",
    "psi_dev",
    "compat_resid",
    "wall_ms",
)
RATE_SERIES = ("l2_diff", "h1_w", "l2_w")
UNIFORM_SERIES = ("h1_u_eps", "max_grad_u_eps", "layer_energy", "psi_scaled")


# --------------------------------------------------------------------------
# problem data


def _component_weights(m):
    return 1.0 + 0.5 * np.arange(m)


def _cosine(x, m):
    # 1 + cos(2 pi x1), the periodic extension of a smooth bump in x1
    base = 1.0 + np.cos(2 * np.pi * x[0])
    return np.multiply.outer(_component_weights(m), base)


def _generic(x, m):
    base = 1.0 + x[0] * x[-1] + np.cos(np.pi * x[0])
    return np.multiply.outer(_component_weights(m), base)


def _constant(x, m):
    return np.multiply.outer(_component_weights(m), np.ones(x.shape[1:]))


DATA_SETS = {"cosine": _cosine, "generic": _generic, "constant": _constant, "random": None}


def make_problem_data(name, m, d, seed=0):
    """Bulk source ``F`` (with ``f = 0``, ``g = 0``) from the named registry entry.

    ``random`` draws a band-limited cosine series from ``seed``.
    """
    if name not in DATA_SETS:
        raise ValueError(f"unknown data set {name!r}; choose from {sorted(DATA_SETS)}")
    if name == "random":
        rng = np.random.default_rng(seed)
        coef = rng.normal(size=(m,) + (4,) * d) / (1.0 + np.arange(4)) ** 2

        def F(x):
            out = 0.0
            for idx in np.ndindex(*(4,) * d):
                mode = np.prod([np.cos(np.pi * k * x[i]) for i, k in enumerate(idx)], axis=0)
                out = out + np.multiply.outer(coef[(slice(None),) + idx], mode)
            return out

        return ProblemData(F=F)
    fn = DATA_SETS[name]
    return ProblemData(F=lambda x: fn(x, m))


# --------------------------------------------------------------------------
# configuration and report


@dataclass
class SweepConfig:
    preset: str = "scalar1d"
    params: tuple = ()
    m: int = 1
    d: int = None
    N: int = 64
    lam: float = 1.0
    mu: float = None
    eps: tuple = (1 / 8, 1 / 16, 1 / 32, 1 / 64)
    cells_per_eps: int = 32
    data: str = "cosine"
    phi: tuple = ("single_smooth",)
    tol: float = 1e-10
    cell_tol: float = 1e-9
    boundary_corrector: bool = True
    workers: int = 1
    cell_budget: int = 8_000_000
    seed: int = 0
    out: str = None
    formats: tuple = ("csv", "json")

    def __post_init__(self):
        self.params = tuple(float(p) for p in self.params)
        self.eps = tuple(sorted((float(e) for e in self.eps), reverse=True))
        self.phi = tuple(PhiStrategy(k, 1.0).kind for k in self.phi)
        self.formats = tuple(self.formats)

    def validate(self):
        if len(self.eps) < 3:
            raise ValueError("need at least 3 eps values for rate fitting")
        if any(e > 0.25 for e in self.eps):
            raise ValueError("eps values must be <= 1/4")
        for e in self.eps:
            n = self.cells_per_eps / e
            if abs(n - round(n)) > 1e-9 * n:
                raise ValueError(f"cells_per_eps/eps = {n:g} is not an integer grid size")
            if round(n) < 16 or self.cells_per_eps < 16:
                raise ValueError(f"eps={e:g} under-resolved with {self.cells_per_eps} cells per eps")
        if not self.phi:
            raise ValueError("at least one phi strategy is required")
        if self.data not in DATA_SETS:
            raise ValueError(f"unknown data set {self.data!r}")

    def grid_size(self, eps):
        return int(round(self.cells_per_eps / eps))

    def to_dict(self):
        out = asdict(self)
        out["params"] = list(self.params)
        out["eps"] = list(self.eps)
        out["phi"] = list(self.phi)
        out["formats"] = list(self.formats)
        return out

    @classmethod
    def from_dict(cls, cfg):
        known = {f for f in cls.__dataclass_fields__}
        aliases = {"lambda": "lam", "cells-per-eps": "cells_per_eps"}
        kwargs = {}
        for key, value in cfg.items():
            key = aliases.get(key, key)
            if key in known:
                kwargs[key] = value
        for key in ("params", "eps", "phi", "formats"):
            if key in kwargs and isinstance(kwargs[key], str):
                kwargs[key] = tuple(kwargs[key].split(","))
        return cls(**kwargs)

    def digest(self):
        payload = {k: v for k, v in self.to_dict().items() if k not in ("out", "workers", "formats")}
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:16]


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    interval: tuple
    points: int
    excluded: tuple = ()
    degenerate: bool = False

    def to_dict(self):
        out = asdict(self)
        out["interval"] = list(self.interval)
        out["excluded"] = list(self.excluded)
        return out


@dataclass
class ConvergenceReport:
    rows: list = field(default_factory=list)
    slopes: dict = field(default_factory=dict)
    ratios: dict = field(default_factory=dict)
    homogenized: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)
    partial: bool = False

    def column(self, name):
        return np.array([row[name] for row in self.rows], dtype=float)

    def to_dict(self):
        return {
            "rows": self.rows,
            "slopes": {k: v.to_dict() if isinstance(v, RateFit) else v for k, v in self.slopes.items()},
            "ratios": self.ratios,
            "homogenized": self.homogenized,
            "config": self.config,
            "provenance": self.provenance,
            "failures": self.failures,
            "partial": self.partial,
        }


# --------------------------------------------------------------------------
# fitting


def fit_rate(points):
    """Least-squares slope of ``log(error)`` against ``log(eps)`` with a 95% interval.

    Nonpositive errors are dropped (and listed in ``excluded``) when positive
    ones remain; all-zero errors give a degenerate fit with infinite slope.
    """
    pts = [(float(e), float(v)) for e, v in points]
    if len(pts) < 3:
        raise ValueError("need at least 3 points to fit a rate")
    good = [(e, v) for e, v in pts if v > 0 and np.isfinite(v)]
    excluded = tuple(e for e, v in pts if not (v > 0 and np.isfinite(v)))
    if not good:
        return RateFit(float("inf"), float("nan"), (float("nan"), float("nan")), 0, excluded, True)
    if len(good) < 2:
        return RateFit(float("nan"), float("nan"), (float("nan"), float("nan")), len(good), excluded, True)
    x = np.log([e for e, _ in good])
    y = np.log([v for _, v in good])
    fit = stats.linregress(x, y)
    if len(good) > 2:
        half = stats.t.ppf(0.975, len(good) - 2) * fit.stderr
    else:
        half = float("nan")
    return RateFit(float(fit.slope), float(fit.intercept), (float(fit.slope - half), float(fit.slope + half)),
                   len(good), excluded, False)


def _ratio(values):
    vals = np.asarray([v for v in values if np.isfinite(v)], dtype=float)
    if vals.size == 0:
        return float("nan")
    lo, hi = float(np.min(np.abs(vals))), float(np.max(np.abs(vals)))
    if hi == 0.0:
        return 1.0
    return hi / lo if lo > 0 else float("inf")


# --------------------------------------------------------------------------
# sweep


def _coefficients(cfg):
    return build_preset(cfg.preset, params=cfg.params, m=cfg.m, d=cfg.d, N=cfg.N, lam=cfg.lam, mu=cfg.mu)


def _run_row(cfg, cs, corr, hom, data, eps):
    start = time.perf_counter()
    n = cfg.grid_size(eps)
    ue = solve_oscillating(cs, eps, data, n, tol=cfg.tol)
    u0 = solve_homogenized_problem(hom, data, n, tol=cfg.tol)
    by_phi = {}
    errors = None
    for kind in cfg.phi:
        phi = build_phi(u0.u, PhiStrategy(kind, eps))
        w = build_w(ue.u, u0.u, corr.chi, phi, eps)
        e = expansion_errors(ue.u, u0.u, w, eps)
        errors = errors or e
        by_phi[kind] = {"h1_w": e.h1_w, "l2_w": e.l2_w}
    psi_dev = float("nan")
    if cfg.boundary_corrector:
        psi_dev = psi_deviation(solve_boundary_corrector(cs, eps, hom, n, tol=cfg.tol))
    r0 = np.sqrt(cs.d)
    row = {
        "eps": eps,
        "l2_diff": errors.l2_diff,
        "h1_w": errors.h1_w,
        "l2_w": errors.l2_w,
        "layer_energy": errors.layer_energy,
        "h1_u_eps": grid_norm(ue.u, "H1"),
        "max_grad_u_eps": grid_norm(ue.u, "max_grad"),
        "psi_dev": psi_dev,
        "compat_resid": float(np.max(np.abs(ue.compatibility_residual))),
        "wall_ms": (time.perf_counter() - start) * 1e3,
        "n": n,
        "residual_eps": ue.relative_residual,
        "residual_hom": u0.relative_residual,
        "tol_eps": ue.tolerance,
        "tol_hom": u0.tolerance,
        "psi_scaled": psi_dev / (eps * np.log(r0 / eps + 2.0)),
        "by_phi": by_phi,
    }
    log.info("eps=%g n=%d l2_diff=%.3e h1_w=%.3e (%.0f ms)", eps, n, row["l2_diff"], row["h1_w"], row["wall_ms"])
    return row


def run_convergence_sweep(cfg):
    """Solve every row of the sweep and fit rates; failures mark the report partial."""
    cfg.validate()
    cs = _coefficients(cfg)
    cells = sum(cfg.grid_size(e) ** cs.d for e in cfg.eps)
    if cells > cfg.cell_budget:
        raise ValueError(f"sweep needs {cells} grid cells, above the budget of {cfg.cell_budget}")
    corr, hom = solve_cell_problems(cs, tol=cfg.cell_tol)
    data = make_problem_data(cfg.data, cs.m, cs.d, cfg.seed)
    report = ConvergenceReport(
        homogenized=hom.to_dict(),
        config=cfg.to_dict(),
        provenance={
            "config_hash": cfg.digest(),
            "resolution": {"cell_N": cs.N, "grids": [cfg.grid_size(e) for e in cfg.eps]},
        },
    )

    def task(eps):
        try:
            return _run_row(cfg, cs, corr, hom, data, eps)
        except HomlabError as exc:
            return {"eps": eps, "error": f"{type(exc).__name__}: {exc}"}

    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(task, cfg.eps))
    else:
        results = [task(e) for e in cfg.eps]

    for res in results:
        if "error" in res:
            report.failures.append(res)
            report.partial = True
        elif res["residual_eps"] > res["tol_eps"] or res["residual_hom"] > res["tol_hom"]:
            report.failures.append({"eps": res["eps"], "error": "solver residual above tolerance"})
            report.partial = True
        else:
            report.rows.append(res)

    if len(report.rows) >= 3:
        for name in RATE_SERIES:
            report.slopes[name] = fit_rate([(r["eps"], r[name]) for r in report.rows])
        for kind in cfg.phi:
            report.slopes[f"h1_w[{kind}]"] = fit_rate([(r["eps"], r["by_phi"][kind]["h1_w"]) for r in report.rows])
    elif report.rows:
        report.partial = True
    for name in UNIFORM_SERIES:
        report.ratios[name] = _ratio([r[name] for r in report.rows])
    return report


# --------------------------------------------------------------------------
# output


def _fmt(value):
    return repr(float(value))


def _write_csv(report, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for row in report.rows:
            writer.writerow([_fmt(row[c]) for c in CSV_COLUMNS])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _write_json(report, path):
    with open(path, "w") as fh:
        json.dump(_jsonable(report.to_dict()), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_svg(report, path, width=480, height=360, pad=50):
    series = []
    for name in RATE_SERIES:
        pts = [(r["eps"], r[name]) for r in report.rows if r[name] > 0 and np.isfinite(r[name])]
        if pts:
            series.append((name, pts))
    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"]
    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="{pad}" y="{pad // 2}" width="{width - 1.5 * pad:g}" height="{height - 1.5 * pad:g}" '
        'fill="none" stroke="#444"/>',
    ]
    all_pts = [p for _, pts in series for p in pts]
    if all_pts:
        lx = np.log10([p[0] for p in all_pts])
        ly = np.log10([p[1] for p in all_pts])
        x0, x1 = lx.min() - 0.1, lx.max() + 0.1
        y0, y1 = ly.min() - 0.2, ly.max() + 0.2

        def sx(v):
            return pad + (np.log10(v) - x0) / (x1 - x0) * (width - 1.5 * pad)

        def sy(v):
            return pad // 2 + (y1 - np.log10(v)) / (y1 - y0) * (height - 1.5 * pad)

        for i, (name, pts) in enumerate(series):
            color = colors[i % len(colors)]
            coords = " ".join(f"{sx(e):.2f},{sy(v):.2f}" for e, v in pts)
            lines.append(f'<polyline class="series" data-name="{name}" points="{coords}" '
                         f'fill="none" stroke="{color}" stroke-width="2"/>')
            fit = report.slopes.get(name)
            if isinstance(fit, RateFit) and not fit.degenerate:
                es = [pts[0][0], pts[-1][0]]
                ys = [np.exp(fit.intercept) * e**fit.slope for e in es]
                lines.append(f'<line class="fit" x1="{sx(es[0]):.2f}" y1="{sy(ys[0]):.2f}" '
                             f'x2="{sx(es[1]):.2f}" y2="{sy(ys[1]):.2f}" stroke="{color}" stroke-dasharray="4 3"/>')
            label = f"{name} slope {fit.slope:.2f}" if isinstance(fit, RateFit) else name
            lines.append(f'<text x="{pad + 8}" y="{pad + 14 * (i + 1)}" font-size="11" fill="{color}">{label}</text>')
    lines.append(f'<text x="{width / 2:g}" y="{height - 8}" font-size="12" text-anchor="middle">eps (log)</text>')
    lines.append("</svg>")
    Path(path).write_text("\n".join(lines) + "\n")


_WRITERS = {"csv": _write_csv, "json": _write_json, "svg": _write_svg}


def emit_report(report, out_dir, formats=("csv", "json"), stem="sweep"):
    """Write the report as ``<stem>.<fmt>`` files in ``out_dir``; returns the paths."""
    unknown = set(formats) - set(_WRITERS)
    if unknown:
        raise ValueError(f"unknown report formats {sorted(unknown)}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for fmt in formats:
        path = out / f"{stem}.{fmt}"
        _WRITERS[fmt](report, path)
        paths.append(path)
    return paths
