"""Y-periodic coefficient fields of the oscillating operator.

Every field is sampled on a uniform ``N**d`` grid over the unit cell
``Y = [0, 1)^d`` and carries its discrete Fourier coefficients.  Off-grid
values come from trigonometric interpolation, so fields are periodic by
construction and smooth enough for spectral differentiation.

Index conventions (``alpha, beta`` are system indices, ``i, j`` spatial)::

    A[alpha, beta, i, j]  = a_ij^{alpha beta}(y)
    V[alpha, beta, i]     = V_i^{alpha beta}(y)
    B[alpha, beta, i]     = B_i^{alpha beta}(y)
    c[alpha, beta]        = c^{alpha beta}(y)
"""

import json
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import CoefficientError

__all__ = [
    "PRESETS",
    "PeriodicTensorField",
    "CoefficientSet",
    "ValidationReport",
    "build_preset",
    "sample_field",
    "validate_coefficients",
    "probe_vectors",
    "load_config",
    "coefficients_from_config",
]

PRESETS = ("identity", "layered", "smooth2d", "scalar1d")
TWO_PI = 2.0 * np.pi


def wavenumbers(N):
    """Integer wavenumbers in FFT order."""
    return np.fft.fftfreq(N, 1.0 / N)


def derivative_wavenumbers(N):
    """Wavenumbers used for spectral derivatives (Nyquist mode zeroed)."""
    k = wavenumbers(N)
    k[N // 2] = 0.0
    return k


def cell_nodes(N):
    return np.arange(N) / N


def _interp_matrix(N, y):
    # rows: points, columns: Fourier modes; the Nyquist mode is evaluated as a
    # cosine so the interpolant stays real and still matches every node
    y = np.asarray(y, dtype=float).reshape(-1)
    k = wavenumbers(N)
    E = np.exp(1j * TWO_PI * np.outer(y, k))
    E[:, N // 2] = np.cos(np.pi * N * y)
    return E


def _is_power_of_two(N):
    return N >= 1 and (N & (N - 1)) == 0


class PeriodicTensorField:
    """A tensor-valued field on the unit torus.

    ``samples`` has shape ``component_shape + (N,) * d``.  The object is
    immutable: the sample array is copied and frozen on construction.
    """

    def __init__(self, samples, d):
        samples = np.array(samples, dtype=float)
        if d not in (1, 2):
            raise CoefficientError(f"d must be 1 or 2, got {d}")
        if samples.ndim < d:
            raise CoefficientError("samples have fewer axes than d")
        grid = samples.shape[samples.ndim - d:]
        N = grid[0]
        if any(s != N for s in grid):
            raise CoefficientError(f"grid must be square, got {grid}")
        if not _is_power_of_two(N) or N < 16:
            raise CoefficientError(f"N must be a power of two >= 16, got {N}")
        if not np.all(np.isfinite(samples)):
            raise CoefficientError("samples contain non-finite values")
        samples.setflags(write=False)
        self._samples = samples
        self.d = d
        self.N = N

    @classmethod
    def from_function(cls, fn, d, N):
        """Sample ``fn(*y)`` on the cell grid; ``fn`` returns ``comp + grid`` arrays."""
        y = np.meshgrid(*([cell_nodes(N)] * d), indexing="ij")
        values = np.asarray(fn(*y), dtype=float)
        if values.shape[values.ndim - d:] != (N,) * d:
            values = values * np.ones((N,) * d)
        return cls(values, d)

    @classmethod
    def constant(cls, value, d, N):
        value = np.asarray(value, dtype=float)
        return cls(value.reshape(value.shape + (1,) * d) * np.ones((N,) * d), d)

    @classmethod
    def from_spectral(cls, coeffs, d):
        axes = tuple(range(coeffs.ndim - d, coeffs.ndim))
        return cls(np.fft.ifftn(coeffs, axes=axes, norm="forward").real, d)

    @property
    def samples(self):
        return self._samples

    @property
    def component_shape(self):
        return self._samples.shape[: self._samples.ndim - self.d]

    @property
    def grid_axes(self):
        n = self._samples.ndim
        return tuple(range(n - self.d, n))

    @cached_property
    def spectral(self):
        """Fourier coefficients normalised so the zero mode is the cell mean."""
        coeffs = np.fft.fftn(self._samples, axes=self.grid_axes, norm="forward")
        coeffs.setflags(write=False)
        return coeffs

    def mean(self):
        return self.spectral[(Ellipsis,) + (0,) * self.d].real.copy()

    def sup_norm(self):
        if self._samples.size == 0:
            return 0.0
        return float(np.max(np.abs(self._samples)))

    def is_constant(self, atol=0.0):
        ref = self._samples[(Ellipsis,) + (0,) * self.d]
        ref = ref.reshape(ref.shape + (1,) * self.d)
        return bool(np.all(np.abs(self._samples - ref) <= atol))

    def derivative(self, i):
        """Spectral derivative along axis ``i`` (0-based)."""
        k = derivative_wavenumbers(self.N)
        shape = [1] * self.d
        shape[i] = self.N
        symbol = 1j * TWO_PI * k.reshape(shape)
        return PeriodicTensorField.from_spectral(self.spectral * symbol, self.d)

    def on_axes(self, *axes):
        """Evaluate on the tensor grid ``axes[0] x axes[1] x ...``.

        Coordinates are in cell units and may lie anywhere in R; the result
        has shape ``component_shape + tuple(len(a) for a in axes)``.
        """
        if len(axes) != self.d:
            raise ValueError(f"expected {self.d} coordinate axes, got {len(axes)}")
        mats = [_interp_matrix(self.N, np.mod(a, 1.0)) for a in axes]
        if self.d == 1:
            out = np.tensordot(self.spectral, mats[0], axes=([-1], [1]))
        else:
            out = np.einsum("...kl,pk,ql->...pq", self.spectral, mats[0], mats[1], optimize=True)
        return out.real

    def at_points(self, points):
        """Evaluate at scattered points of shape ``(P, d)``."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        mats = [_interp_matrix(self.N, np.mod(points[:, i], 1.0)) for i in range(self.d)]
        if self.d == 1:
            out = np.tensordot(self.spectral, mats[0], axes=([-1], [1]))
        else:
            out = np.einsum("...kl,pk,pl->...p", self.spectral, mats[0], mats[1], optimize=True)
        return out.real

    def __call__(self, y):
        return sample_field(self, y)

    def __repr__(self):
        return f"PeriodicTensorField(component_shape={self.component_shape}, d={self.d}, N={self.N})"


def sample_field(field, y):
    """Value of ``field`` at the point ``y`` (reduced modulo 1 on each axis)."""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if y.shape != (field.d,):
        raise ValueError(f"expected a point in R^{field.d}, got shape {y.shape}")
    return field.at_points(y[None, :])[..., 0]


@dataclass(frozen=True)
class CoefficientSet:
    """Coefficients ``A, V, B, c`` of the oscillating operator plus metadata.

    ``mu`` is the ellipticity constant, ``kappa`` bounds the sup-norms of
    ``V, B, c`` and ``lam`` is the zeroth-order shift.
    """

    A: PeriodicTensorField
    V: PeriodicTensorField
    B: PeriodicTensorField
    c: PeriodicTensorField
    lam: float = 0.0
    mu: float = 1.0
    kappa: float = 0.0
    symmetric_A: bool = True
    name: str = "custom"
    params: tuple = ()

    def __post_init__(self):
        m, d = self.m, self.d
        expected = {
            "A": (m, m, d, d),
            "V": (m, m, d),
            "B": (m, m, d),
            "c": (m, m),
        }
        for key, shape in expected.items():
            f = getattr(self, key)
            if f.component_shape != shape:
                raise CoefficientError(f"{key} has component shape {f.component_shape}, expected {shape}")
            if f.d != d or f.N != self.N:
                raise CoefficientError(f"{key} lives on a different grid than A")
        if self.lam < 0:
            raise CoefficientError("lambda must be nonnegative")
        if not self.mu > 0:
            raise CoefficientError("mu must be positive")

    @property
    def m(self):
        return self.A.component_shape[0]

    @property
    def d(self):
        return self.A.d

    @property
    def N(self):
        return self.A.N

    @classmethod
    def from_arrays(cls, A, V=None, B=None, c=None, *, d, lam=0.0, mu=None, kappa=None, name="custom"):
        """Build from raw sample arrays; missing lower-order terms are zero."""
        A = PeriodicTensorField(A, d)
        m, N = A.component_shape[0], A.N
        zeros_vec = np.zeros((m, m, d) + (N,) * d)
        V = PeriodicTensorField(zeros_vec if V is None else V, d)
        B = PeriodicTensorField(zeros_vec if B is None else B, d)
        c = PeriodicTensorField(np.zeros((m, m) + (N,) * d) if c is None else c, d)
        sym = _is_symmetric(A)
        if kappa is None:
            kappa = max(V.sup_norm(), B.sup_norm(), c.sup_norm())
        if mu is None:
            mu = _measured_mu(A)
        return cls(A, V, B, c, lam=float(lam), mu=float(mu), kappa=float(kappa), symmetric_A=sym, name=name)

    def with_lambda(self, lam):
        return CoefficientSet(self.A, self.V, self.B, self.c, lam=float(lam), mu=self.mu, kappa=self.kappa,
                              symmetric_A=self.symmetric_A, name=self.name, params=self.params)

    def to_dict(self):
        return {
            "preset": self.name,
            "params": list(self.params),
            "m": self.m,
            "d": self.d,
            "N": self.N,
            "lambda": self.lam,
            "mu": self.mu,
            "kappa": self.kappa,
            "symmetric_A": self.symmetric_A,
        }


def _is_symmetric(A):
    s = A.samples
    return bool(np.array_equal(s, np.transpose(s, (1, 0, 3, 2) + A.grid_axes)))


def probe_vectors(m, d, count=32, seed=0):
    """Fixed set of unit vectors xi in R^{d x m} (indexed ``xi[p, i, alpha]``).

    The coordinate vectors come first, the rest are seeded random directions.
    """
    n = m * d
    basis = np.eye(n)
    rng = np.random.default_rng(seed)
    extra = rng.standard_normal((max(count - n, 0), n))
    extra /= np.linalg.norm(extra, axis=1, keepdims=True)
    xi = np.vstack([basis, extra])[:count]
    return xi.reshape(-1, d, m)


def _quadratic_forms(A, xi):
    # q[p, nodes] = a_ij^{ab} xi_i^a xi_j^b / |xi|^2 (the probes are unit only up to rounding)
    q = np.einsum("abij...,pia,pjb->p...", A.samples, xi, xi, optimize=True)
    norm2 = np.einsum("pia,pia->p", xi, xi)
    return q / norm2.reshape((-1,) + (1,) * (q.ndim - 1))


def _measured_mu(A):
    xi = probe_vectors(A.component_shape[0], A.d)
    q = _quadratic_forms(A, xi)
    lo, hi = float(q.min()), float(q.max())
    if lo <= 0:
        return 1.0 / hi if hi > 0 else 1.0
    return min(lo, 1.0 / hi)


@dataclass
class ValidationReport:
    """Margins for ellipticity, boundedness and regularity of a CoefficientSet."""

    ok: bool
    ellipticity_margin: float
    lower_margin: float
    upper_margin: float
    sup_V: float
    sup_B: float
    sup_c: float
    kappa_bound: float
    kappa_margin: float
    holder_seminorm: float
    holder_exponent: float
    symmetric_A: bool
    messages: list = field(default_factory=list)

    def to_dict(self):
        return dict(self.__dict__)


def validate_coefficients(cs, holder_exponent=0.5):
    """Check the structural assumptions on ``cs`` at every grid node.

    Never raises for bad coefficients; inspect ``report.ok`` instead.
    """
    xi = probe_vectors(cs.m, cs.d)
    q = _quadratic_forms(cs.A, xi)
    lower = float(np.min(q - cs.mu))
    upper = float(np.min(1.0 / cs.mu - q))
    sup_V, sup_B, sup_c = cs.V.sup_norm(), cs.B.sup_norm(), cs.c.sup_norm()
    kappa_margin = cs.kappa - max(sup_V, sup_B, sup_c)

    h = 1.0 / cs.N
    holder = 0.0
    for f in (cs.A, cs.V):
        for ax in f.grid_axes:
            diff = np.abs(np.roll(f.samples, -1, axis=ax) - f.samples)
            if diff.size:
                holder = max(holder, float(diff.max()) / h ** holder_exponent)

    # margins within rounding of the bounds themselves count as satisfied
    slack = 1e-12 * max(1.0, 1.0 / cs.mu)
    messages = []
    if lower < -slack:
        messages.append(f"lower ellipticity bound violated by {-lower:.3g}")
    if upper < -slack:
        messages.append(f"upper ellipticity bound violated by {-upper:.3g}")
    if kappa_margin < -slack * max(1.0, cs.kappa):
        messages.append(f"lower-order sup-norm exceeds kappa by {-kappa_margin:.3g}")
    sym = _is_symmetric(cs.A)
    if sym != cs.symmetric_A:
        messages.append("symmetric_A flag disagrees with the sampled coefficients")
    margin = min(lower, upper)
    return ValidationReport(
        ok=not messages,
        ellipticity_margin=margin,
        lower_margin=lower,
        upper_margin=upper,
        sup_V=sup_V,
        sup_B=sup_B,
        sup_c=sup_c,
        kappa_bound=cs.kappa,
        kappa_margin=kappa_margin,
        holder_seminorm=holder,
        holder_exponent=holder_exponent,
        symmetric_A=sym,
        messages=messages,
    )


_DEFAULTS = {
    "identity": [],
    "scalar1d": [2.0, 1.0, 0.0, 0.0, 0.0],
    "layered": [2.0, 1.0, 0.0],
    "smooth2d": [2.0, 1.0, 0.0, 0.0, 0.0],
}
_DIMENSION = {"scalar1d": 1, "layered": 2, "smooth2d": 2}


def _fill_params(name, params):
    defaults = _DEFAULTS[name]
    params = [float(p) for p in params]
    if len(params) > len(defaults):
        raise CoefficientError(f"preset {name!r} takes at most {len(defaults)} parameters, got {len(params)}")
    return params + defaults[len(params):]


def build_preset(name, params=(), m=1, d=None, N=64, lam=0.0, mu=None, check=True):
    """Construct one of the trigonometric-polynomial coefficient presets.

    ``identity``  A = I, no lower-order terms (any d).
    ``scalar1d``  ``[a0, a1, v1, b0, c0]``: a = a0 + a1 cos(2 pi y), V = v1 cos(2 pi y),
                  B = b0, c = c0 (d = 1).
    ``layered``   ``[a0, a1, v1]``: a = a0 + a1 cos(2 pi y1), V_1 = v1 cos(2 pi y1) (d = 2).
    ``smooth2d``  ``[a0, a1, v1, b1, c1]``: a = a0 + a1 cos(2 pi y1) cos(2 pi y2),
                  V_i = v1 cos(2 pi y1) cos(2 pi y2), B_i = b1 cos(2 pi y1) cos(2 pi y2),
                  c = c1 cos(2 pi (y1 - y2)) (d = 2).

    The scalar profile multiplies ``delta_ij delta_alpha_beta``, so every preset
    is a diagonal system of ``m`` copies.  With ``check=False`` the set is
    returned even when ellipticity fails (useful for exercising the validator).
    """
    if name not in PRESETS:
        raise CoefficientError(f"unknown preset {name!r}; choose from {PRESETS}")
    if d is None:
        d = _DIMENSION.get(name, 2)
    if name in _DIMENSION and _DIMENSION[name] != d:
        raise CoefficientError(f"preset {name!r} requires d={_DIMENSION[name]}")
    p = _fill_params(name, params)
    y = np.meshgrid(*([cell_nodes(N)] * d), indexing="ij")
    one = np.ones((N,) * d)
    zero = np.zeros((N,) * d)

    if name == "identity":
        a, amin, amax = one, 1.0, 1.0
        v = [zero] * d
        b = [zero] * d
        c = zero
        kappa = 0.0
    elif name == "scalar1d":
        a0, a1, v1, b0, c0 = p
        a = a0 + a1 * np.cos(TWO_PI * y[0])
        amin, amax = a0 - abs(a1), a0 + abs(a1)
        v = [v1 * np.cos(TWO_PI * y[0])]
        b = [b0 * one]
        c = c0 * one
        kappa = max(abs(v1), abs(b0), abs(c0))
    elif name == "layered":
        a0, a1, v1 = p
        a = a0 + a1 * np.cos(TWO_PI * y[0])
        amin, amax = a0 - abs(a1), a0 + abs(a1)
        v = [v1 * np.cos(TWO_PI * y[0]), zero]
        b = [zero, zero]
        c = zero
        kappa = abs(v1)
    else:
        a0, a1, v1, b1, c1 = p
        amin, amax = a0 - abs(a1), a0 + abs(a1)
        cc = np.cos(TWO_PI * y[0]) * np.cos(TWO_PI * y[1])
        a = a0 + a1 * cc
        v = [v1 * cc, v1 * cc]
        b = [b1 * cc, b1 * cc]
        c = c1 * np.cos(TWO_PI * (y[0] - y[1]))
        kappa = max(abs(v1), abs(b1), abs(c1))

    if check and amin <= 0:
        raise CoefficientError(f"preset {name!r} with params {p} is not elliptic (min a = {amin:g})")
    if mu is None:
        mu = min(amin, 1.0 / amax) if amin > 0 else 1.0 / amax

    Im = np.eye(m)
    Id = np.eye(d)
    A = np.einsum("ab,ij,...->abij...", Im, Id, a)
    V = np.einsum("ab,i...->abi...", Im, np.stack(v))
    B = np.einsum("ab,i...->abi...", Im, np.stack(b))
    C = np.einsum("ab,...->ab...", Im, c)
    cs = CoefficientSet(
        PeriodicTensorField(A, d),
        PeriodicTensorField(V, d),
        PeriodicTensorField(B, d),
        PeriodicTensorField(C, d),
        lam=float(lam),
        mu=float(mu),
        kappa=float(kappa),
        symmetric_A=True,
        name=name,
        params=tuple(p),
    )
    if check:
        report = validate_coefficients(cs)
        if not report.ok:
            raise CoefficientError("; ".join(report.messages))
    return cs


def load_config(path):
    """Read a JSON configuration file into a dict."""
    with open(path) as fh:
        return json.load(fh)


def coefficients_from_config(cfg, check=True):
    """Build a CoefficientSet from a config mapping.

    Recognised keys: ``preset``, ``params``, ``m``, ``d``, ``N``, ``lambda``, ``mu``.
    """
    return build_preset(
        cfg["preset"],
        cfg.get("params", ()),
        m=int(cfg.get("m", 1)),
        d=cfg.get("d"),
        N=int(cfg.get("N", 64)),
        lam=float(cfg.get("lambda", 0.0)),
        mu=cfg.get("mu"),
        check=check,
    )


def _symbols(N, d):
    k = derivative_wavenumbers(N)
    out = []
    for i in range(d):
        shape = [1] * d
        shape[i] = N
        out.append(1j * TWO_PI * k.reshape(shape))
    return out


def spectral_gradient(samples, d):
    """Spectral gradient of grid samples; a new leading axis indexes direction."""
    samples = np.asarray(samples, dtype=float)
    N = samples.shape[-1]
    axes = tuple(range(samples.ndim - d, samples.ndim))
    coeffs = np.fft.fftn(samples, axes=axes)
    return np.stack([np.fft.ifftn(coeffs * s, axes=axes).real for s in _symbols(N, d)])


def spectral_divergence(flux, d):
    """Spectral divergence of ``flux`` whose leading axis is the direction index."""
    flux = np.asarray(flux, dtype=float)
    N = flux.shape[-1]
    axes = tuple(range(flux.ndim - 1 - d, flux.ndim - 1))
    total = 0.0
    for i, s in enumerate(_symbols(N, d)):
        total = total + np.fft.fftn(flux[i], axes=axes) * s
    return np.fft.ifftn(total, axes=axes).real


def cell_mean(samples, d):
    """Cell average of grid samples (exact zero Fourier mode)."""
    samples = np.asarray(samples, dtype=float)
    return samples.mean(axis=tuple(range(samples.ndim - d, samples.ndim)))
