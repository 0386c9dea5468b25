import csv
import json
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from homlab.rate_harness import (
    CSV_COLUMNS,
    ConvergenceReport,
    SweepConfig,
    emit_report,
    fit_rate,
    make_problem_data,
    run_convergence_sweep,
)

EPS = (1 / 8, 1 / 16, 1 / 32)


@pytest.mark.parametrize("slope", [1.0, 2.0, 0.5])
def test_fit_exact_power_laws(slope):
    pts = [(e, 3.0 * e**slope) for e in (1 / 8, 1 / 16, 1 / 32, 1 / 64)]
    fit = fit_rate(pts)
    assert fit.slope == pytest.approx(slope, abs=1e-12)
    assert fit.interval[0] == pytest.approx(slope, abs=1e-9)
    assert fit.interval[1] == pytest.approx(slope, abs=1e-9)
    assert not fit.degenerate and fit.points == 4


def test_fit_interval_contains_noisy_slope():
    rng = np.random.default_rng(1)
    eps = 2.0 ** -np.arange(3, 9)
    fit = fit_rate(list(zip(eps, eps * np.exp(0.05 * rng.normal(size=eps.size)))))
    assert fit.interval[0] < fit.slope < fit.interval[1]
    assert abs(fit.slope - 1.0) < 0.1


def test_fit_degenerate_and_excluded():
    fit = fit_rate([(1 / 8, 0.0), (1 / 16, 0.0), (1 / 32, 0.0)])
    assert fit.degenerate and fit.slope == float("inf")
    fit = fit_rate([(1 / 8, 0.1), (1 / 16, 0.05), (1 / 32, 0.0), (1 / 64, 0.0125)])
    assert fit.excluded == (1 / 32,)
    assert fit.slope == pytest.approx(1.0)
    with pytest.raises(ValueError):
        fit_rate([(1 / 8, 1.0), (1 / 16, 0.5)])


def test_emit_empty_report(tmp_path):
    paths = emit_report(ConvergenceReport(), tmp_path, ("csv", "json", "svg"))
    assert [p.name for p in paths] == ["sweep.csv", "sweep.json", "sweep.svg"]
    assert (tmp_path / "sweep.csv").read_text() == ",".join(CSV_COLUMNS) + "\n"
    assert json.loads((tmp_path / "sweep.json").read_text())["rows"] == []
    ET.parse(tmp_path / "sweep.svg")
    with pytest.raises(ValueError):
        emit_report(ConvergenceReport(), tmp_path, ("xlsx",))


def test_config_validation():
    with pytest.raises(ValueError):
        SweepConfig(eps=(1 / 8, 1 / 16)).validate()
    with pytest.raises(ValueError):
        SweepConfig(eps=(1 / 2, 1 / 8, 1 / 16)).validate()
    with pytest.raises(ValueError):
        SweepConfig(eps=EPS, cells_per_eps=8).validate()
    with pytest.raises(ValueError):
        SweepConfig(eps=(0.1, 0.05, 0.03)).validate()
    with pytest.raises(ValueError):
        SweepConfig(eps=EPS, phi=("gaussian",))
    with pytest.raises(ValueError):
        make_problem_data("noise", 1, 1)
    cfg = SweepConfig.from_dict({"eps": "0.125,0.0625,0.03125", "lambda": 6, "cells-per-eps": 32, "phi": "single"})
    assert cfg.lam == 6 and cfg.cells_per_eps == 32 and cfg.phi == ("single_smooth",)
    assert cfg.digest() == SweepConfig.from_dict(cfg.to_dict()).digest()


def test_cell_budget():
    cfg = SweepConfig(preset="smooth2d", params=(2, 1, 0.5, 0.5, 0.5), lam=3.5, eps=EPS, cell_budget=10_000)
    with pytest.raises(ValueError, match="budget"):
        run_convergence_sweep(cfg)


def test_random_data_is_seeded():
    x = np.linspace(0, 1, 11)[None]
    a = make_problem_data("random", 2, 1, seed=3).F(x)
    b = make_problem_data("random", 2, 1, seed=3).F(x)
    c = make_problem_data("random", 2, 1, seed=4).F(x)
    assert a.shape == (2, 11)
    assert np.array_equal(a, b) and not np.array_equal(a, c)


def test_constant_coefficient_sweep():
    report = run_convergence_sweep(SweepConfig(preset="identity", d=1, eps=EPS, phi=("steklov",)))
    assert not report.partial
    assert np.all(report.column("l2_diff") <= 1e-12)
    assert np.all(report.column("psi_dev") == 0.0)


_1D = dict(preset="scalar1d", params=(2, 1, 1), lam=6.0, eps=EPS, phi=("steklov", "single"))


@pytest.fixture(scope="module")
def sweep_1d():
    return run_convergence_sweep(SweepConfig(**_1D))


def test_sweep_rows_and_report(sweep_1d, tmp_path):
    report = sweep_1d
    assert not report.partial and len(report.rows) == 3
    assert list(report.column("eps")) == sorted(EPS, reverse=True)
    assert set(report.slopes) >= {"l2_diff", "h1_w", "l2_w", "h1_w[steklov]", "h1_w[single_smooth]"}
    assert 0.8 < report.slopes["l2_diff"].slope < 1.2
    assert report.ratios["h1_u_eps"] < 1.1
    for row in report.rows:
        assert row["h1_w"] == row["by_phi"]["steklov"]["h1_w"]
        assert row["compat_resid"] <= 1e-8
    emit_report(report, tmp_path, ("csv", "json", "svg"))
    with open(tmp_path / "sweep.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 3 and tuple(rows[0]) == CSV_COLUMNS
    assert float(rows[1]["l2_diff"]) == report.rows[1]["l2_diff"]
    payload = json.loads((tmp_path / "sweep.json").read_text())
    assert payload["provenance"]["config_hash"] == SweepConfig(**_1D).digest()
    svg = ET.parse(tmp_path / "sweep.svg").getroot()
    lines = [el for el in svg.iter() if el.tag.endswith("polyline")]
    assert len(lines) == 3


def _strip_timing(report):
    return [{k: v for k, v in row.items() if k != "wall_ms"} for row in report.rows]


def test_sweep_is_deterministic(sweep_1d):
    again = run_convergence_sweep(SweepConfig(**_1D))
    assert _strip_timing(again) == _strip_timing(sweep_1d)
    assert again.homogenized == sweep_1d.homogenized


def test_workers_do_not_change_results(sweep_1d):
    parallel = run_convergence_sweep(SweepConfig(workers=2, **_1D))
    assert _strip_timing(parallel) == _strip_timing(sweep_1d)


def test_failed_rows_mark_report_partial():
    # lambda below the coercivity threshold: every row is refused
    report = run_convergence_sweep(SweepConfig(preset="scalar1d", params=(2, 1, 1), lam=1.0, eps=EPS))
    assert report.partial and not report.rows
    assert len(report.failures) == 3
    assert "Coercivity" in report.failures[0]["error"]
