import numpy as np
import pytest

from homlab.cell_solver import (
    cell_residual,
    compute_flux_discrepancy,
    compute_lower_order_discrepancy,
    dump_field,
    load_field,
    solve_cell_corrector,
    solve_cell_problems,
    solve_flux_potential,
)
from homlab.errors import CompatibilityError, ConvergenceError, UnderResolvedError
from homlab.homogenize import HomogenizedSet
from homlab.periodic_fields import CoefficientSet, PeriodicTensorField, build_preset, cell_mean, spectral_gradient

SQRT3 = np.sqrt(3.0)
PRESETS = [
    ("identity", [], 2, 1),
    ("scalar1d", [2, 1, 1, 0.5, 0.3], 1, 1),
    ("layered", [2, 1, 0.5], 2, 2),
    ("smooth2d", [2, 1, 0.5, 0.5, 0.5], 2, 1),
    ("smooth2d", [2, 1, 0.5, 0.5, 0.5], 2, 2),
]


def test_constant_a_has_zero_correctors():
    cs = build_preset("identity", d=2)
    for k in range(3):
        assert np.all(solve_cell_corrector(cs, k).samples == 0)


def test_1d_corrector_derivative_closed_form():
    cs = build_preset("scalar1d", [2.0, 1.0])
    chi = solve_cell_corrector(cs, 1, tol=1e-10)
    y = np.arange(64) / 64
    dchi = spectral_gradient(chi.samples, 1)[0, 0, 0]
    assert np.max(np.abs(dchi - (SQRT3 / (2 + np.cos(2 * np.pi * y)) - 1))) <= 1e-9
    assert dchi[0] == pytest.approx(SQRT3 / 3 - 1, abs=1e-9)
    assert cell_residual(cs, 1, chi) <= 1e-10


def test_cell_residual_of_wrong_corrector():
    cs = build_preset("identity", d=2, N=16)
    assert cell_residual(cs, 1, np.zeros((1, 1, 16, 16))) == 0.0
    y1 = np.arange(16)[:, None] / 16 * np.ones((1, 16))
    probe = np.sin(2 * np.pi * y1)[None, None]
    # forcing vanishes for constant A, so the absolute residual is reported
    assert cell_residual(cs, 1, probe) > 0


@pytest.mark.parametrize("name,params,d,m", PRESETS)
def test_structural_identities(name, params, d, m):
    cs = build_preset(name, params, m=m, d=d)
    corr, hom = solve_cell_problems(cs)
    assert np.max(np.abs(cell_mean(corr.chi, d))) <= 1e-12
    assert np.max(np.abs(cell_mean(corr.theta, d))) <= 1e-12
    assert np.max(np.abs(cell_mean(corr.vartheta, d))) <= 1e-12
    for k in range(d + 1):
        assert cell_residual(cs, k, corr.chi[k]) <= 1e-9
    assert np.max(np.abs(cell_mean(corr.b, d))) <= 1e-10
    assert np.max(np.abs(cell_mean(corr.W, d))) <= 1e-10
    assert np.array_equal(corr.E, -np.swapaxes(corr.E, 0, 1))
    assert corr.residual_norms["E_divergence"] <= 1e-8


def test_flux_discrepancy_examples():
    cs = build_preset("scalar1d", [2.0, 1.0])
    corr, hom = solve_cell_problems(cs)
    assert np.max(np.abs(corr.b)) <= 1e-9

    cs = build_preset("layered", [2.0, 1.0])
    corr, hom = solve_cell_problems(cs)
    y1 = np.arange(64) / 64
    assert np.allclose(corr.b[1, 2, 0, 0], (2.0 - (2 + np.cos(2 * np.pi * y1)))[:, None], atol=1e-9)

    const = build_preset("identity", d=2)
    corr, hom = solve_cell_problems(const)
    assert np.all(corr.b == 0)


def test_flux_discrepancy_detects_foreign_hom():
    cs = build_preset("layered", [2.0, 1.0])
    corr, hom = solve_cell_problems(cs)
    wrong = HomogenizedSet(hom.A_hat * 1.1, hom.V_hat, hom.B_hat, hom.c_hat)
    with pytest.raises(CompatibilityError):
        compute_flux_discrepancy(cs, wrong, corr.chi)


def test_flux_potential_single_mode():
    N = 32
    y1 = np.arange(N)[:, None] / N * np.ones((1, N))
    b = np.zeros((2, 3, 1, 1, N, N))
    b[0, 1, 0, 0] = np.cos(2 * np.pi * y1)
    theta, E, _ = solve_flux_potential(b, 2)
    assert np.allclose(theta[0, 1, 0, 0], -np.cos(2 * np.pi * y1) / (4 * np.pi**2), atol=1e-15)
    assert np.allclose(E[1, 0, 1], 0, atol=1e-15) and np.allclose(E[0, 1, 1], 0, atol=1e-15)
    theta, E, defect = solve_flux_potential(np.zeros_like(b), 2)
    assert not theta.any() and not E.any() and defect == 0


def test_flux_potential_rejects_nonzero_mean():
    b = np.ones((1, 2, 1, 1, 16))
    with pytest.raises(CompatibilityError, match="mean"):
        solve_flux_potential(b, 1)


def test_lower_order_discrepancy_examples():
    cs = build_preset("scalar1d", [2.0, 1.0, 0.0, 1.0])
    corr, hom = solve_cell_problems(cs)
    assert hom.B_hat.item() == pytest.approx(1.0, abs=1e-10)
    dchi = spectral_gradient(corr.chi[1], 1)[0, 0, 0]
    W, _ = compute_lower_order_discrepancy(cs, hom, corr.chi)
    assert np.allclose(W[1, 0, 0], -dchi, atol=1e-10)

    cs = build_preset("layered", [2.0, 1.0, 0.5])
    corr, hom = solve_cell_problems(cs)
    assert not corr.W.any() and not corr.vartheta.any()
    assert not hom.B_hat.any() and not hom.c_hat.any()


def test_iteration_cap():
    cs = build_preset("scalar1d", [2.0, 1.9])
    with pytest.raises(ConvergenceError):
        solve_cell_corrector(cs, 1, tol=1e-12, maxiter=2)


def test_resolution_error():
    N = 16
    y = np.arange(N) / N
    a = 1 + 0.95 * np.sign(np.cos(2 * np.pi * y))  # discontinuous, badly resolved
    cs = CoefficientSet.from_arrays(a[None, None, None, None], d=1, mu=0.05)
    with pytest.raises(UnderResolvedError):
        solve_cell_corrector(cs, 1)


def test_corrector_set_fields():
    cs = build_preset("smooth2d", [2, 1, 0.5, 0.5, 0.5], m=2)
    corr, _ = solve_cell_problems(cs)
    f = corr.chi_field(1)
    assert isinstance(f, PeriodicTensorField) and f.component_shape == (2, 2)
    assert corr.field("E", 0, 1, 2).component_shape == (2, 2)


@pytest.mark.parametrize("fmt", ["csv", "npy"])
def test_field_dump_round_trip(tmp_path, fmt):
    data = np.random.default_rng(0).normal(size=(2, 3, 16))
    path = tmp_path / f"f.{fmt}"
    dump_field(path, data, fmt=fmt)
    back = load_field(path) if fmt == "csv" else np.load(path)
    assert np.array_equal(back, data)
    if fmt == "csv":
        assert path.read_text().splitlines()[0] == "# shape: 2,3,16"
