"""Constant homogenized coefficients and an independent 1D quadrature oracle."""

from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .errors import CoefficientError
from .periodic_fields import cell_mean, probe_vectors, spectral_gradient

__all__ = ["HomogenizedSet", "assemble_homogenized", "oracle_1d_homogenize"]


@dataclass(frozen=True)
class HomogenizedSet:
    """Constant tensors of the homogenized operator.

    Shapes: ``A_hat (m, m, d, d)``, ``V_hat (m, m, d)``, ``B_hat (m, m, d)``,
    ``c_hat (m, m)``; same index order as the oscillating coefficients.
    """

    A_hat: np.ndarray
    V_hat: np.ndarray
    B_hat: np.ndarray
    c_hat: np.ndarray
    lam: float = 0.0

    @property
    def m(self):
        return self.A_hat.shape[0]

    @property
    def d(self):
        return self.A_hat.shape[2]

    def is_finite(self):
        return all(np.all(np.isfinite(t)) for t in (self.A_hat, self.V_hat, self.B_hat, self.c_hat))

    def ellipticity_bounds(self):
        """(min, max) of the quadratic form of ``A_hat`` over the probe set."""
        xi = probe_vectors(self.m, self.d)
        q = np.einsum("abij,pia,pjb->p", self.A_hat, xi, xi) / np.einsum("pia,pia->p", xi, xi)
        return float(q.min()), float(q.max())

    def to_dict(self):
        return {
            "A_hat": self.A_hat.tolist(),
            "V_hat": self.V_hat.tolist(),
            "B_hat": self.B_hat.tolist(),
            "c_hat": self.c_hat.tolist(),
            "lambda": self.lam,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            np.asarray(data["A_hat"], dtype=float),
            np.asarray(data["V_hat"], dtype=float),
            np.asarray(data["B_hat"], dtype=float),
            np.asarray(data["c_hat"], dtype=float),
            lam=float(data.get("lambda", 0.0)),
        )

    @classmethod
    def from_coefficients(cls, cs):
        """Homogenized set of a constant-coefficient problem (cell averages)."""
        return cls(cs.A.mean(), cs.V.mean(), cs.B.mean(), cs.c.mean(), lam=cs.lam)


def assemble_homogenized(cs, chi):
    """Cell averages of coefficient-corrector products.

    ``chi`` is the corrector array of shape ``(d + 1, m, m) + grid`` with
    ``chi[0]`` the potential corrector and ``chi[k]`` the k-th gradient
    corrector (``chi[k][gamma, beta]`` is component gamma of column beta).
    """
    chi = np.asarray(chi, dtype=float)
    m, d = cs.m, cs.d
    if chi.shape[:3] != (d + 1, m, m):
        raise CoefficientError(f"corrector array has shape {chi.shape[:3]}, expected {(d + 1, m, m)}")
    A, V, B, c = cs.A.samples, cs.V.samples, cs.B.samples, cs.c.samples
    # dchi[k, g, b, l] = d chi_k^{g b} / d y_l
    dchi = np.moveaxis(spectral_gradient(chi, d), 0, 3)

    A_hat = cell_mean(A + np.einsum("agil...,jgbl...->abij...", A, dchi[1:]), d)
    V_hat = cell_mean(V + np.einsum("agij...,gbj...->abi...", A, dchi[0]), d)
    B_hat = cell_mean(B + np.einsum("agj...,igbj...->abi...", B, dchi[1:]), d)
    c_hat = cell_mean(c + np.einsum("agi...,gbi...->ab...", B, dchi[0]), d)
    return HomogenizedSet(A_hat, V_hat, B_hat, c_hat, lam=cs.lam)


def oracle_1d_homogenize(cs, tol=1e-12):
    """Homogenized scalar coefficients in 1D by adaptive quadrature.

    In one dimension the cell problems integrate in closed form, giving
    ``A_hat = 1 / <1/a>``, ``V_hat = A_hat <V/a>``, ``B_hat = A_hat <B/a>`` and
    ``c_hat = <c> + V_hat <B/a> - <B V / a>``.
    """
    if cs.d != 1 or cs.m != 1:
        raise CoefficientError("the quadrature oracle needs d = 1 and m = 1")

    def scalar(f):
        return lambda y: float(f(np.array([y])).reshape(-1)[0])

    a, V, B, c = scalar(cs.A), scalar(cs.V), scalar(cs.B), scalar(cs.c)

    def quad(fn):
        value, _ = integrate.quad(fn, 0.0, 1.0, epsabs=tol, epsrel=tol, limit=200)
        return value

    inv_a = quad(lambda y: 1.0 / a(y))
    A_hat = 1.0 / inv_a
    B_over_a = quad(lambda y: B(y) / a(y))
    V_hat = A_hat * quad(lambda y: V(y) / a(y))
    B_hat = A_hat * B_over_a
    c_hat = quad(c) + V_hat * B_over_a - quad(lambda y: B(y) * V(y) / a(y))
    return HomogenizedSet(
        np.full((1, 1, 1, 1), A_hat),
        np.full((1, 1, 1), V_hat),
        np.full((1, 1, 1), B_hat),
        np.full((1, 1), c_hat),
        lam=cs.lam,
    )
