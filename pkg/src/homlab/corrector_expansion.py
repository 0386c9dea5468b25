"""First-order corrected differences ``w_eps`` and their error norms.

``w^b = u_eps^b - u0^b - eps * sum_k chi_k^{bg}(x / eps) phi_k^g`` where the
``phi_k`` are smoothed, cut-off copies of ``u0`` (k = 0) and of its partial
derivatives (k = 1..d).  Three recipes for ``phi`` are provided:

``single_smooth``  ``S_eps(psi_{4 eps} .)``
``double_smooth``  ``S_eps S_eps(psi_{2 eps} .)``
``steklov``        Steklov average of the evenly reflected field (no cutoff)
"""

from dataclasses import asdict, dataclass

import numpy as np

from .grid import GridFunction, grid_norm, nodal_gradient
from .periodic_fields import PeriodicTensorField
from .smoothing import boundary_cutoff, layer_norm, smooth_seps, smooth_steklov

__all__ = ["PhiStrategy", "ExpansionErrors", "build_phi", "build_w", "expansion_errors", "PHI_KINDS"]

PHI_KINDS = ("single_smooth", "double_smooth", "steklov")
_CUTOFF_FACTOR = {"single_smooth": 4.0, "double_smooth": 2.0, "steklov": None}
_ALIASES = {"single": "single_smooth", "double": "double_smooth"}


@dataclass(frozen=True)
class PhiStrategy:
    kind: str
    eps: float

    def __post_init__(self):
        kind = _ALIASES.get(self.kind, self.kind)
        if kind not in PHI_KINDS:
            raise ValueError(f"unknown phi strategy {self.kind!r}; choose from {PHI_KINDS}")
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        object.__setattr__(self, "kind", kind)

    @property
    def cutoff_radius(self):
        factor = _CUTOFF_FACTOR[self.kind]
        return None if factor is None else factor * self.eps


@dataclass(frozen=True)
class ExpansionErrors:
    l2_diff: float
    h1_w: float
    l2_w: float
    layer_energy: float

    def to_dict(self):
        return asdict(self)


def _with_components(u):
    """View nodal values with an explicit leading component axis."""
    return u.values if u.values.ndim > u.d else u.values[None]


def build_phi(u0, strategy):
    """Return ``phi`` of shape ``(d + 1, m) + grid`` as a GridFunction.

    ``phi[0]`` is built from ``u0`` and ``phi[k]`` from ``d u0 / d x_k``.
    """
    d, eps = u0.d, strategy.eps
    vals = _with_components(u0)
    grad = nodal_gradient(GridFunction(vals, d))  # (m, d) + grid
    sources = [vals] + [grad[:, k] for k in range(d)]
    out = np.empty((d + 1,) + vals.shape)
    if strategy.kind == "steklov":
        for k, src in enumerate(sources):
            # the derivative along axis k of an even extension is odd across that axis
            parity = tuple(-1 if (k > 0 and ax == k - 1) else 1 for ax in range(d))
            out[k] = smooth_steklov(GridFunction(src, d), eps, parity=parity).values
        return GridFunction(out, d)

    psi = boundary_cutoff(strategy.cutoff_radius, u0.n, d).values
    for k, src in enumerate(sources):
        g = GridFunction(src * psi, d)
        g = smooth_seps(g, eps)
        if strategy.kind == "double_smooth":
            g = smooth_seps(g, eps)
        out[k] = g.values
    return GridFunction(out, d)


def corrector_at_nodes(chi, n, eps):
    """Trigonometric interpolation of ``chi`` (field or array) at ``x / eps`` on the nodes."""
    if not isinstance(chi, PeriodicTensorField):
        arr = np.asarray(chi)
        d = arr.ndim - 3
        chi = PeriodicTensorField(arr, d)
    axis = np.linspace(0.0, 1.0, n + 1) / eps
    return chi.on_axes(*([axis] * chi.d))


def build_w(u_eps, u0, chi, phi, eps):
    """Assemble ``w = u_eps - u0 - eps * chi_k(x / eps) phi_k``.

    ``chi`` has shape ``(d + 1, m, m) + cell grid`` (entry ``[k, b, g]``
    multiplies ``phi[k, g]`` in component ``b``), or is a PeriodicTensorField
    of that component shape.  ``phi`` is the output of :func:`build_phi`.
    """
    if u_eps.values.shape != u0.values.shape or u_eps.d != u0.d:
        raise ValueError(f"u_eps and u0 differ in shape: {u_eps.values.shape} vs {u0.values.shape}")
    d, n = u0.d, u0.n
    ue, uz = _with_components(u_eps), _with_components(u0)
    m = ue.shape[0]
    if phi.values.shape != (d + 1, m) + (n + 1,) * d:
        raise ValueError(f"phi has shape {phi.values.shape}, expected {(d + 1, m) + (n + 1,) * d}")
    chi_nodes = corrector_at_nodes(chi, n, eps)
    if chi_nodes.shape[:3] != (d + 1, m, m):
        raise ValueError(f"corrector has component shape {chi_nodes.shape[:3]}, expected {(d + 1, m, m)}")
    corr = np.einsum("kbg...,kg...->b...", chi_nodes, phi.values)
    w = ue - uz - eps * corr
    return GridFunction(w if u_eps.values.ndim > d else w[0], d)


def expansion_errors(u_eps, u0, w, eps):
    """The four error measures of one sweep row."""
    diff = u_eps - u0
    return ExpansionErrors(
        l2_diff=grid_norm(diff, "L2"),
        h1_w=grid_norm(w, "H1"),
        l2_w=grid_norm(w, "L2"),
        layer_energy=layer_norm(u_eps, eps, "H1_layer") / np.sqrt(eps),
    )
