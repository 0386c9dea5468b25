import numpy as np
import pytest

from homlab.corrector_expansion import (
    PHI_KINDS,
    PhiStrategy,
    build_phi,
    build_w,
    corrector_at_nodes,
    expansion_errors,
)
from homlab.domain_solver import ProblemData, solve_homogenized_problem, solve_oscillating
from homlab.grid import GridFunction, grid_norm
from homlab.smoothing import distance_to_boundary

PI = np.pi


def test_strategy_names():
    assert PhiStrategy("single", 0.1).kind == "single_smooth"
    assert PhiStrategy("double", 0.1).cutoff_radius == pytest.approx(0.2)
    assert PhiStrategy("single_smooth", 0.1).cutoff_radius == pytest.approx(0.4)
    assert PhiStrategy("steklov", 0.1).cutoff_radius is None
    with pytest.raises(ValueError):
        PhiStrategy("gaussian", 0.1)
    with pytest.raises(ValueError):
        PhiStrategy("steklov", 0.0)


@pytest.mark.parametrize("d", [1, 2])
def test_steklov_of_constant(d):
    u0 = GridFunction(np.full((65,) * d, 2.5), d)
    phi = build_phi(u0, PhiStrategy("steklov", 1 / 8)).values
    assert phi.shape == (d + 1, 1) + (65,) * d
    assert np.allclose(phi[0], 2.5, atol=1e-13)
    assert np.allclose(phi[1:], 0.0, atol=1e-13)


def test_steklov_of_linear_field():
    n, eps = 128, 1 / 8
    u0 = GridFunction.from_function(lambda x: x[0], n, 2)
    phi = build_phi(u0, PhiStrategy("steklov", eps)).values
    interior = distance_to_boundary(n, 2) > eps
    x = np.linspace(0, 1, n + 1)[:, None] * np.ones((1, n + 1))
    assert np.max(np.abs(phi[0, 0][interior] - x[interior])) <= 1e-12
    assert np.allclose(phi[1, 0][interior], 1.0, atol=1e-12)
    assert np.allclose(phi[2, 0], 0.0, atol=1e-12)


def test_single_smooth_vanishes_near_boundary():
    n, eps = 256, 1 / 32
    u0 = GridFunction(np.full((n + 1,) * 2, 3.0), 2)
    phi = build_phi(u0, PhiStrategy("single", eps)).values[0, 0]
    dist = distance_to_boundary(n, 2)
    # cutoff is 0 within 4 eps, the mollifier reaches eps / 2
    assert np.all(np.abs(phi[dist < 3.5 * eps - 1e-12]) <= 1e-12)
    assert np.allclose(phi[dist > 8.5 * eps], 3.0, atol=1e-12)


def test_double_smooth_support():
    n, eps = 256, 1 / 32
    u0 = GridFunction(np.ones((n + 1,) * 2), 2)
    phi = build_phi(u0, PhiStrategy("double", eps)).values[0, 0]
    dist = distance_to_boundary(n, 2)
    assert np.all(np.abs(phi[dist < eps - 1e-12]) <= 1e-12)
    assert np.allclose(phi[dist > 5 * eps], 1.0, atol=1e-12)


def _chi(d, m=1, N=16):
    y = np.arange(N) / N
    grids = np.meshgrid(*([y] * d), indexing="ij")
    chi = np.zeros((d + 1, m, m) + (N,) * d)
    for k in range(1, d + 1):
        for b in range(m):
            chi[k, b, b] = np.sin(2 * PI * grids[k - 1])
    return chi


def test_zero_corrector_gives_plain_difference():
    n, eps = 64, 1 / 8
    ue = GridFunction.from_function(lambda x: np.cos(PI * x[0]), n, 1)
    u0 = GridFunction.from_function(lambda x: x[0] ** 2, n, 1)
    phi = build_phi(u0, PhiStrategy("steklov", eps))
    w = build_w(ue, u0, np.zeros((2, 1, 1, 16)), phi, eps)
    assert np.array_equal(w.values, (ue - u0).values)


def test_zero_phi_gives_plain_difference():
    n, eps = 64, 1 / 8
    ue = GridFunction.from_function(lambda x: np.cos(PI * x[0]) * x[1], n, 2)
    u0 = GridFunction.zeros(n, 2)
    phi = GridFunction(np.zeros((3, 1, n + 1, n + 1)), 2)
    w = build_w(ue, u0, _chi(2), phi, eps)
    assert np.array_equal(w.values, ue.values)


def test_corrector_term_matches_direct_evaluation():
    n, eps = 64, 1 / 8
    ue = GridFunction.zeros(n, 1)
    u0 = GridFunction.zeros(n, 1)
    phi = GridFunction(np.ones((2, 1, n + 1)), 1)
    w = build_w(ue, u0, _chi(1), phi, eps)
    x = np.linspace(0, 1, n + 1)
    assert np.allclose(w.values, -eps * np.sin(2 * PI * x / eps), atol=1e-12)
    assert corrector_at_nodes(_chi(1), n, eps).shape == (2, 1, 1, n + 1)


def test_shape_mismatch():
    u1 = GridFunction.zeros(32, 1)
    u2 = GridFunction.zeros(64, 1)
    phi = GridFunction(np.zeros((2, 1, 33)), 1)
    with pytest.raises(ValueError):
        build_w(u1, u2, _chi(1), phi, 1 / 4)
    with pytest.raises(ValueError):
        build_w(u2, u2, _chi(1), phi, 1 / 4)
    good = GridFunction(np.zeros((2, 1, 65)), 1)
    with pytest.raises(ValueError):
        build_w(u2, u2, _chi(2), good, 1 / 4)


def test_errors_of_identical_fields():
    u = GridFunction.from_function(lambda x: np.cos(PI * x[0]), 64, 1)
    errs = expansion_errors(u, u, GridFunction.zeros(64, 1), 1 / 8)
    assert errs.l2_diff == 0.0 and errs.h1_w == 0.0 and errs.l2_w == 0.0
    assert errs.layer_energy > 0
    assert set(errs.to_dict()) == {"l2_diff", "h1_w", "l2_w", "layer_energy"}


@pytest.fixture(scope="module")
def solved_1d(scalar1d_with_v):
    cs, corr, hom = scalar1d_with_v
    eps, n = 1 / 16, 1024
    data = ProblemData(F=lambda x: 1 + np.cos(PI * x[0]))
    ue = solve_oscillating(cs, eps, data, n).u
    u0 = solve_homogenized_problem(hom, data, n).u
    return corr, eps, ue, u0


@pytest.mark.parametrize("kind", PHI_KINDS)
def test_corrector_improves_energy_error(solved_1d, kind):
    corr, eps, ue, u0 = solved_1d
    w = build_w(ue, u0, corr.chi, build_phi(u0, PhiStrategy(kind, eps)), eps)
    assert grid_norm(w, "H1") < grid_norm(ue - u0, "H1")


def test_steklov_beats_cutoff_strategies_at_coarse_eps(solved_1d):
    corr, eps, ue, u0 = solved_1d
    errs = {k: grid_norm(build_w(ue, u0, corr.chi, build_phi(u0, PhiStrategy(k, eps)), eps), "H1")
            for k in PHI_KINDS}
    assert errs["steklov"] < errs["double_smooth"] < errs["single_smooth"]


def test_single_smooth_leaves_layer_untouched(solved_1d):
    corr, eps, ue, u0 = solved_1d
    w = build_w(ue, u0, corr.chi, build_phi(u0, PhiStrategy("single", eps)), eps)
    layer = distance_to_boundary(ue.n, 1) <= eps
    assert np.max(np.abs(w.values - (ue - u0).values)[..., layer]) <= 1e-14


def test_strategies_agree_in_the_interior():
    # both are eps-scale mollifiers of the same field; the gap shrinks like eps
    n = 512
    u0 = GridFunction.from_function(lambda x: np.cos(PI * x[0]) * (1 + x[1] ** 2), n, 2)
    gaps = []
    for eps in (1 / 32, 1 / 64):
        a = build_phi(u0, PhiStrategy("single", eps)).values
        b = build_phi(u0, PhiStrategy("steklov", eps)).values
        mask = distance_to_boundary(n, 2) > 9 * eps
        gaps.append(np.sqrt(np.mean((a - b)[..., mask] ** 2)))
        assert gaps[-1] <= 5 * eps
    assert gaps[1] < gaps[0]
