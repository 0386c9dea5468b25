"""Nodal fields on the unit box and their quadrature norms.

A :class:`GridFunction` stores values at the ``(n + 1)^d`` nodes of a uniform
grid over ``[0, 1]^d``.  Leading axes of ``values`` index components, the
trailing ``d`` axes index nodes (``values[..., i1, i2]`` sits at
``(i1 h, i2 h)``).
"""

from dataclasses import dataclass

import numpy as np

__all__ = ["GridFunction", "grid_norm", "nodal_gradient", "to_gauss", "GAUSS_POINTS"]

GAUSS_POINTS = np.array([0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0)])


@dataclass(frozen=True)
class GridFunction:
    values: np.ndarray
    d: int

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if self.d not in (1, 2):
            raise ValueError(f"d must be 1 or 2, got {self.d}")
        grid = values.shape[values.ndim - self.d:]
        if len(grid) != self.d or any(s != grid[0] for s in grid):
            raise ValueError(f"values must end in {self.d} equal node axes, got {values.shape}")
        if grid[0] - 1 < 8:
            raise ValueError(f"need n >= 8 cells per axis, got {grid[0] - 1}")
        if not np.all(np.isfinite(values)):
            raise ValueError("grid function has non-finite values")
        object.__setattr__(self, "values", values)

    @property
    def n(self):
        return self.values.shape[-1] - 1

    @property
    def h(self):
        return 1.0 / self.n

    @property
    def component_shape(self):
        return self.values.shape[: self.values.ndim - self.d]

    @property
    def spatial_axes(self):
        k = self.values.ndim
        return tuple(range(k - self.d, k))

    def coordinates(self):
        """Node coordinates as a ``(d, n+1, ...)`` array."""
        return node_coordinates(self.n, self.d)

    def like(self, values):
        return GridFunction(values, self.d)

    def __add__(self, other):
        return self.like(self.values + _values(other))

    def __sub__(self, other):
        return self.like(self.values - _values(other))

    def __mul__(self, scalar):
        return self.like(self.values * _values(scalar))

    __rmul__ = __mul__

    @classmethod
    def from_function(cls, fn, n, d):
        """Sample ``fn(x)`` at the nodes; ``x`` has shape ``(d, n+1, ...)``."""
        x = node_coordinates(n, d)
        values = np.asarray(fn(x), dtype=float)
        if values.shape[values.ndim - d:] != (n + 1,) * d:
            values = values * np.ones((n + 1,) * d)
        return cls(values, d)

    @classmethod
    def zeros(cls, n, d, component_shape=()):
        return cls(np.zeros(tuple(component_shape) + (n + 1,) * d), d)


def _values(obj):
    return obj.values if isinstance(obj, GridFunction) else obj


def node_coordinates(n, d):
    x = np.linspace(0.0, 1.0, n + 1)
    return np.stack(np.meshgrid(*([x] * d), indexing="ij"))


def nodal_gradient(u):
    """Centered-difference gradient (one-sided, second order at the boundary).

    Returns an array with a new axis for the direction placed right before the
    node axes: shape ``component_shape + (d,) + grid``.
    """
    axes = u.spatial_axes
    grads = np.gradient(u.values, u.h, axis=axes, edge_order=2)
    if u.d == 1:
        grads = [grads]
    return np.stack(grads, axis=u.values.ndim - u.d)


def to_gauss(values, d):
    """Q1 interpolation of nodal values to the 2-point Gauss nodes of each cell.

    Output trailing axes are ``(n, 2)`` per dimension (cell, gauss point).
    """
    out = np.asarray(values, dtype=float)
    k = out.ndim - d
    for step in range(d):
        ax = k + 2 * step
        lo = np.take(out, np.arange(out.shape[ax] - 1), axis=ax)
        hi = np.take(out, np.arange(1, out.shape[ax]), axis=ax)
        pts = [lo * (1 - g) + hi * g for g in GAUSS_POINTS]
        out = np.stack(pts, axis=ax + 1)
    return out


def trapezoid_weights(n, d):
    w = np.full(n + 1, 1.0 / n)
    w[[0, -1]] *= 0.5
    if d == 1:
        return w
    return np.multiply.outer(w, w)


def _sq_components(arr, ncomp_axes):
    if ncomp_axes == 0:
        return arr**2
    return np.sum(arr**2, axis=tuple(range(ncomp_axes)))


def grid_norm(u, which="L2", p=2.0):
    """Quadrature norm of a grid function.

    ``which`` is one of ``L2``, ``H1``, ``Lp``, ``W1p`` or ``max_grad``.
    Function values are integrated with 2-point Gauss rules on the Q1
    interpolant; gradients are centered differences integrated with the
    trapezoid rule.  Vector values use the Euclidean norm over components.
    """
    ncomp = u.values.ndim - u.d
    if which in ("L2", "H1"):
        p = 2.0
    if p < 1:
        raise ValueError("p must be >= 1")

    def value_integral(power):
        g = to_gauss(u.values, u.d)
        mag = np.sqrt(_sq_components(g, ncomp))
        return float(np.sum(mag**power)) * (u.h / 2.0) ** u.d

    def grad_magnitude():
        grad = nodal_gradient(u)
        return np.sqrt(_sq_components(grad, ncomp + 1))

    if which == "max_grad":
        return float(np.max(grad_magnitude()))
    if which in ("L2", "Lp"):
        return value_integral(p) ** (1.0 / p)
    if which in ("H1", "W1p"):
        w = trapezoid_weights(u.n, u.d)
        grad_part = float(np.sum(w * grad_magnitude() ** p))
        return (value_integral(p) + grad_part) ** (1.0 / p)
    raise ValueError(f"unknown norm {which!r}")
