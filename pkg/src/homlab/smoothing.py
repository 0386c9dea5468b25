"""Mollifiers, Steklov averaging, boundary cutoffs and boundary-layer norms.

Fields are extended across the faces of the unit box by reflection before
smoothing (even by default; odd per axis on request, which is the right
extension for the normal derivative of an evenly reflected field).
"""

import warnings

import numpy as np
from scipy.ndimage import correlate1d
from scipy.signal import fftconvolve

from .errors import UnderResolvedError
from .grid import GridFunction, nodal_gradient, node_coordinates

__all__ = [
    "bump_kernel",
    "steklov_weights",
    "smooth_seps",
    "smooth_steklov",
    "distance_to_boundary",
    "boundary_cutoff",
    "layer_norm",
]


def _check_eps(f, eps):
    if eps < 2 * f.h * (1 - 1e-12):
        raise UnderResolvedError(f"eps={eps:g} is below two grid spacings (h={f.h:g})")


def _extend(values, width, d, parity=None):
    """Reflect ``values`` across each face by ``width`` nodes."""
    if parity is None:
        parity = (1,) * d
    k = values.ndim - d
    out = values
    for ax in range(d):
        axis = k + ax
        pad = [(0, 0)] * out.ndim
        pad[axis] = (width[ax], width[ax])
        out = np.pad(out, pad, mode="reflect")
        if parity[ax] < 0 and width[ax] > 0:
            sl = [slice(None)] * out.ndim
            sl[axis] = slice(0, width[ax])
            out[tuple(sl)] *= -1
            sl[axis] = slice(out.shape[axis] - width[ax], None)
            out[tuple(sl)] *= -1
    return out


def bump_kernel(eps, h, d):
    """Discrete weights of ``exp(-1 / (1 - |2x/eps|^2))`` normalised to unit mass."""
    K = int(np.floor(eps / (2 * h) + 1e-9))
    offs = np.arange(-K, K + 1) * (2 * h / eps)
    r2 = sum(o**2 for o in np.meshgrid(*([offs] * d), indexing="ij"))
    kernel = np.zeros_like(r2)
    inside = r2 < 1.0
    kernel[inside] = np.exp(-1.0 / (1.0 - r2[inside]))
    return kernel / kernel.sum()


def smooth_seps(f, eps, parity=None):
    """Convolve ``f`` with the bump mollifier of radius ``eps/2``."""
    _check_eps(f, eps)
    kernel = bump_kernel(eps, f.h, f.d)
    K = kernel.shape[0] // 2
    if K == 0:
        return f.like(f.values.copy())
    padded = _extend(f.values, (K,) * f.d, f.d, parity)
    k = f.values.ndim - f.d
    kshape = (1,) * k + kernel.shape
    out = fftconvolve(padded, kernel.reshape(kshape), mode="valid", axes=tuple(range(k, k + f.d)))
    return f.like(out)


def _hat_antiderivative(t):
    t = np.asarray(t, dtype=float)
    return np.where(t < -1, 0.0, np.where(t < 0, 0.5 * (t + 1) ** 2, np.where(t < 1, 1 - 0.5 * (1 - t) ** 2, 1.0)))


def steklov_weights(eps, h):
    """1D weights of the centred window average of the piecewise-linear interpolant."""
    half = eps / (2 * h)
    K = int(np.ceil(half - 1e-9))
    k = np.arange(-K, K + 1)
    w = _hat_antiderivative(half - k) - _hat_antiderivative(-half - k)
    return w / w.sum()


def smooth_steklov(f, eps, parity=None):
    """Average of ``f(x - eps z)`` over the centred cell ``z in (-1/2, 1/2]^d``.

    The average is taken exactly over the piecewise-linear interpolant, one
    axis at a time.
    """
    _check_eps(f, eps)
    w = steklov_weights(eps, f.h)
    K = w.size // 2
    out = _extend(f.values, (K,) * f.d, f.d, parity)
    k = f.values.ndim - f.d
    for ax in range(f.d):
        axis = k + ax
        out = correlate1d(out, w, axis=axis, mode="constant")
        out = np.take(out, np.arange(K, out.shape[axis] - K), axis=axis)
    return f.like(out)


def distance_to_boundary(n, d):
    x = node_coordinates(n, d)
    return np.min(np.minimum(x, 1.0 - x), axis=0)


def boundary_cutoff(r, grid, d=None):
    """Cutoff equal to 1 where dist(x, boundary) > 2r and 0 where it is <= r.

    ``grid`` is a GridFunction template or a cell count ``n`` (then pass ``d``).
    The profile is the cubic smoothstep in the distance, so ``|grad| <= 1.5/r``.
    """
    if r <= 0:
        raise ValueError("cutoff radius must be positive")
    if isinstance(grid, GridFunction):
        n, d = grid.n, grid.d
    else:
        n = int(grid)
    if 2 * r >= 0.5:
        warnings.warn(f"cutoff radius r={r:g}: the interior region dist > 2r is empty", stacklevel=2)
    delta = distance_to_boundary(n, d)
    t = np.clip((delta - r) / r, 0.0, 1.0)
    return GridFunction(t * t * (3.0 - 2.0 * t), d)


def _inner_fraction(n, d, r):
    # fraction of each cell lying in the interior box [r, 1 - r]^d
    lo = np.arange(n) / n
    hi = lo + 1.0 / n
    frac1 = np.clip(np.minimum(hi, 1.0 - r) - np.maximum(lo, r), 0.0, None) * n
    if d == 1:
        return frac1
    return np.multiply.outer(frac1, frac1)


def _cell_average(nodal, d):
    out = nodal
    for ax in range(d):
        lo = np.take(out, np.arange(out.shape[ax] - 1), axis=ax)
        hi = np.take(out, np.arange(1, out.shape[ax]), axis=ax)
        out = 0.5 * (lo + hi)
    return out


def layer_norm(f, r, which="L2_layer"):
    """L2 or H1 norm of ``f`` over the boundary layer ``{dist(x, boundary) <= r}``.

    Each cell contributes its corner-averaged integrand weighted by the exact
    fraction of its area inside the layer.
    """
    ncomp = f.values.ndim - f.d
    dens = np.sum(f.values**2, axis=tuple(range(ncomp))) if ncomp else f.values**2
    if which == "H1_layer":
        grad = nodal_gradient(f)
        dens = dens + np.sum(grad**2, axis=tuple(range(ncomp + 1)))
    elif which != "L2_layer":
        raise ValueError(f"unknown layer norm {which!r}")
    layer_frac = 1.0 - _inner_fraction(f.n, f.d, r)
    total = np.sum(layer_frac * _cell_average(dens, f.d)) * f.h**f.d
    return float(np.sqrt(total))


def phi_gradient(u):
    """Per-direction gradient of ``u`` as a list of GridFunctions."""
    grad = nodal_gradient(u)
    axis = u.values.ndim - u.d
    return [u.like(np.take(grad, i, axis=axis)) for i in range(u.d)]
