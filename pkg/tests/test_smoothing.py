import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from homlab.errors import UnderResolvedError
from homlab.grid import GridFunction, grid_norm, nodal_gradient
from homlab.smoothing import (
    boundary_cutoff,
    bump_kernel,
    distance_to_boundary,
    layer_norm,
    smooth_seps,
    smooth_steklov,
    steklov_weights,
)

SMOOTHERS = [smooth_seps, smooth_steklov]


def _trig(n, d, k, phase=0.0):
    # band-limited test field on the nodes
    return GridFunction.from_function(lambda x: np.cos(2 * np.pi * np.tensordot(k, x, axes=1) + phase), n, d)


def _interior(n, d, width):
    return distance_to_boundary(n, d) >= width - 1e-12


@pytest.mark.parametrize("smooth", SMOOTHERS)
@pytest.mark.parametrize("d", [1, 2])
def test_constants_preserved(smooth, d):
    f = GridFunction(np.full((2,) + (65,) * d, 3.7), d)
    assert np.max(np.abs(smooth(f, 1 / 8).values - 3.7)) <= 1e-12


@pytest.mark.parametrize("smooth", SMOOTHERS)
@pytest.mark.parametrize("d", [1, 2])
def test_interior_linears_preserved(smooth, d):
    n, eps = 128, 1 / 8
    f = GridFunction.from_function(lambda x: 0.3 + x[0] - 2 * x[-1], n, d)
    out = smooth(f, eps)
    mask = _interior(n, d, eps / 2)
    assert np.max(np.abs(out.values - f.values)[mask]) <= 1e-12


@pytest.mark.parametrize("smooth", SMOOTHERS)
def test_sine_example(smooth):
    n, eps = 256, 1 / 16
    f = GridFunction.from_function(lambda x: np.sin(2 * np.pi * x[0]), n, 2)
    err = grid_norm(smooth(f, eps) - f, "L2")
    assert err <= eps * np.sqrt(2) * np.pi
    assert err > 0


@pytest.mark.parametrize("smooth", SMOOTHERS)
def test_under_resolved(smooth):
    f = GridFunction(np.zeros((17, 17)), 2)
    with pytest.raises(UnderResolvedError):
        smooth(f, 1 / 16)


def test_kernels_have_unit_mass_and_support():
    for eps, h in [(1 / 8, 1 / 64), (1 / 16, 1 / 512), (0.1, 0.03)]:
        k = bump_kernel(eps, h, 2)
        assert k.sum() == pytest.approx(1.0, abs=1e-14)
        assert np.all(k >= 0)
        assert (k.shape[0] // 2) * h <= eps / 2 + 1e-12
        w = steklov_weights(eps, h)
        assert w.sum() == pytest.approx(1.0, abs=1e-14)
        assert np.allclose(w, w[::-1])


def test_steklov_is_exact_window_average():
    # average of x^2 over [x - eps/2, x + eps/2] is x^2 + eps^2/12; the linear
    # interpolant adds h^2/6, which the exact window integral reproduces
    n, eps = 256, 1 / 8
    f = GridFunction.from_function(lambda x: x[0] ** 2, n, 1)
    out = smooth_steklov(f, eps)
    mask = _interior(n, 1, eps / 2)
    x = np.linspace(0, 1, n + 1)
    expected = x**2 + eps**2 / 12 + (1 / n) ** 2 / 6
    assert np.max(np.abs(out.values - expected)[mask]) <= 1e-12


@pytest.mark.parametrize("smooth", SMOOTHERS)
def test_linear_and_positive(smooth):
    rng = np.random.default_rng(2)
    f = GridFunction(rng.random((65, 65)), 2)
    g = GridFunction(rng.random((65, 65)), 2)
    lhs = smooth(f * 2.0 + g, 1 / 8).values
    rhs = 2.0 * smooth(f, 1 / 8).values + smooth(g, 1 / 8).values
    assert np.allclose(lhs, rhs, atol=1e-13)
    assert np.all(smooth(f, 1 / 8).values >= 0)


@pytest.mark.parametrize("smooth", SMOOTHERS)
@pytest.mark.parametrize("eps", [1 / 8, 1 / 16, 1 / 32])
def test_approximation_bound_band_limited(smooth, eps):
    n = 256
    for k1 in range(5):
        for k2 in range(5):
            if k1 == k2 == 0:
                continue
            for phase in (0.0, np.pi / 2):
                f = _trig(n, 2, np.array([k1, k2]), phase)
                grad = GridFunction(nodal_gradient(f), 2)
                ratio = grid_norm(smooth(f, eps) - f) / (eps * grid_norm(grad))
                assert ratio <= 1.0


def test_oscillating_multiplier_bound():
    rng = np.random.default_rng(5)
    n, eps = 256, 1 / 16
    x = np.linspace(0, 1, n + 1)
    X = np.stack(np.meshgrid(x, x, indexing="ij"))
    worst = 0.0
    for _ in range(20):
        kg = rng.integers(0, 4, size=(3, 2))
        cg = rng.normal(size=3)
        g = lambda y: sum(c * np.cos(2 * np.pi * np.tensordot(k, y, axes=1)) for c, k in zip(cg, kg))
        ys = np.stack(np.meshgrid(*(np.arange(64) / 64,) * 2, indexing="ij"))
        g_norm = np.sqrt(np.mean(g(ys) ** 2))
        kf = rng.integers(0, 4, size=(3, 2))
        cf = rng.normal(size=3)
        f = GridFunction(sum(c * np.cos(np.pi * np.tensordot(k, X, axes=1)) for c, k in zip(cf, kf)), 2)
        prod = GridFunction(g(X / eps) * smooth_seps(f, eps).values, 2)
        worst = max(worst, grid_norm(prod) / (g_norm * grid_norm(f)))
    assert worst <= 4.0


def test_cutoff_profile():
    r = 1 / 16
    n = 256
    psi = boundary_cutoff(r, n, 2).values
    delta = distance_to_boundary(n, 2)
    assert np.all(psi[np.isclose(delta, 3 * r)] == 1.0)
    assert np.all(psi[np.isclose(delta, r / 2)] == 0.0)
    assert np.allclose(psi[np.isclose(delta, 1.5 * r) & (delta < 0.4)], 0.5)
    assert np.all(psi[delta > 2 * r] == 1.0) and np.all(psi[delta <= r] == 0.0)
    grad = np.sqrt(np.sum(nodal_gradient(GridFunction(psi, 2)) ** 2, axis=0))
    assert grad.max() <= 2 / r


def test_cutoff_warns_when_interior_empty():
    with pytest.warns(UserWarning, match="empty"):
        boundary_cutoff(0.3, 64, 2)
    with pytest.raises(ValueError):
        boundary_cutoff(0.0, 64, 2)


def test_layer_norm_examples():
    one = GridFunction(np.ones((129, 129)), 2)
    assert layer_norm(one, 1 / 8) == pytest.approx(np.sqrt(7 / 16), abs=1e-12)
    assert layer_norm(one * 0.0, 1 / 8) == 0.0
    assert layer_norm(one, 0.5) == pytest.approx(1.0, abs=1e-12)
    # the layer fraction is exact even when r is not a grid line
    assert layer_norm(one, 0.1) == pytest.approx(np.sqrt(1 - 0.8**2), abs=1e-12)
    lin = GridFunction.from_function(lambda x: x[0], 128, 2)
    assert layer_norm(lin, 0.5, "H1_layer") == pytest.approx(grid_norm(lin, "H1"), rel=1e-3)


@settings(max_examples=20, deadline=None)
@given(st.floats(min_value=0.02, max_value=0.45))
def test_layer_norm_of_constant_is_sqrt_area(r):
    one = GridFunction(np.ones((65, 65)), 2)
    assert layer_norm(one, r) == pytest.approx(np.sqrt(1 - (1 - 2 * r) ** 2), abs=1e-12)
