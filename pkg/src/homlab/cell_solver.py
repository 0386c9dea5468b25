"""Periodic cell problems on the unit torus and the auxiliary corrector fields.

The correctors solve ``div(A (grad chi + G)) = 0`` where the forcing ``G`` is
column ``k`` of ``A`` (gradient correctors) or ``V`` (potential corrector).
The discrete problem is Fourier collocation; it is solved with GMRES
preconditioned by the exact inverse of the constant-coefficient operator
built from the cell average of ``A`` (the Lippmann-Schwinger splitting).
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import LinearOperator, gmres

from .errors import CompatibilityError, ConvergenceError, UnderResolvedError
from .homogenize import assemble_homogenized
from .periodic_fields import (
    TWO_PI,
    PeriodicTensorField,
    cell_mean,
    derivative_wavenumbers,
    spectral_divergence,
    spectral_gradient,
)

__all__ = [
    "CorrectorSet",
    "solve_cell_corrector",
    "cell_residual",
    "compute_flux_discrepancy",
    "solve_flux_potential",
    "compute_lower_order_discrepancy",
    "solve_cell_problems",
    "dump_field",
]

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-9
MAX_ITER = 10_000


@dataclass(frozen=True)
class CorrectorSet:
    """All cell-level fields derived from one CoefficientSet.

    Array layouts (trailing axes are the cell grid)::

        chi[k, gamma, beta]            k = 0..d
        b[i, k, alpha, gamma]          i = 1..d (0-based), k = 0..d
        theta[i, k, alpha, gamma]
        E[j, i, k, alpha, gamma]       E[j, i] = -E[i, j]
        W[k, alpha, gamma]
        vartheta[k, alpha, gamma]
    """

    chi: np.ndarray
    b: np.ndarray
    theta: np.ndarray
    E: np.ndarray
    W: np.ndarray
    vartheta: np.ndarray
    d: int
    residual_norms: dict = field(default_factory=dict)

    def chi_field(self, k):
        return PeriodicTensorField(self.chi[k], self.d)

    def field(self, name, *index):
        return PeriodicTensorField(getattr(self, name)[index], self.d)


def _cell_forcing(cs, k, gamma):
    # G[i, alpha] for column gamma of corrector k
    if k == 0:
        return np.moveaxis(cs.V.samples[:, gamma], 1, 0)
    return np.moveaxis(cs.A.samples[:, gamma, :, k - 1], 1, 0)


def _apply_operator(A, u, d):
    # div(A grad u) for an m-vector field u
    grad = spectral_gradient(u, d)  # (j, beta, grid)
    flux = np.einsum("abij...,jb...->ia...", A, grad)
    return spectral_divergence(flux, d)


def _strong_residual(A, chi_col, G, d):
    grad = spectral_gradient(chi_col, d)
    flux = np.einsum("abij...,jb...->ia...", A, grad) + G
    return spectral_divergence(flux, d)


class _ReferenceInverse:
    """Exact inverse of div(A0 grad) on mean-free, Nyquist-free fields."""

    def __init__(self, A0, N, d):
        k = derivative_wavenumbers(N)
        xi = np.stack(np.meshgrid(*([k] * d), indexing="ij"))  # (d, grid)
        symbol = -(TWO_PI**2) * np.einsum("abij,i...,j...->...ab", A0, xi, xi)
        null = np.all(xi == 0, axis=0)
        symbol[null] = np.eye(A0.shape[0])
        inv = np.linalg.inv(symbol)
        inv[null] = 0.0
        self.inv = inv
        self.d = d

    def __call__(self, r):
        axes = tuple(range(1, 1 + self.d))
        rh = np.fft.fftn(r, axes=axes)
        out = np.einsum("...ab,b...->a...", self.inv, rh)
        return np.fft.ifftn(out, axes=axes).real


def _spectral_tail(u, d):
    # relative spectral energy above |k|_inf > N/4
    N = u.shape[-1]
    axes = tuple(range(u.ndim - d, u.ndim))
    coeffs = np.abs(np.fft.fftn(u, axes=axes)) ** 2
    k = np.abs(np.fft.fftfreq(N, 1.0 / N))
    kk = np.max(np.stack(np.meshgrid(*([k] * d), indexing="ij")), axis=0)
    total = coeffs.sum()
    if total == 0:
        return 0.0
    return float(np.sqrt(coeffs[..., kk > N // 4].sum() / total))


def _solve_column(cs, k, gamma, tol, maxiter, resolution_tol):
    d, m, N = cs.d, cs.m, cs.N
    A = cs.A.samples
    G = _cell_forcing(cs, k, gamma)
    rhs = -spectral_divergence(G, d)
    rhs_norm = np.linalg.norm(rhs)
    shape = (m,) + (N,) * d
    if rhs_norm == 0.0:
        return np.zeros(shape), 0.0, 0

    precond = _ReferenceInverse(cell_mean(A, d), N, d)
    size = int(np.prod(shape))

    def matvec(x):
        return precond(_apply_operator(A, x.reshape(shape), d)).ravel()

    op = LinearOperator((size, size), matvec=matvec, dtype=float)
    b = precond(rhs).ravel()
    x = np.zeros(size)
    iterations = 0

    def count(_):
        nonlocal iterations
        iterations += 1

    rtol = 0.1 * tol
    residual = np.inf
    for _ in range(6):
        x, info = gmres(op, b, x0=x, rtol=rtol, atol=0.0, restart=min(100, maxiter),
                        maxiter=max(1, maxiter // 100),
                        callback=count, callback_type="pr_norm")
        chi = x.reshape(shape)
        chi -= cell_mean(chi, d)[(Ellipsis,) + (None,) * d]
        residual = np.linalg.norm(_strong_residual(A, chi, G, d)) / rhs_norm
        if residual <= tol:
            break
        if iterations >= maxiter:
            break
        rtol *= 0.1
    if residual > tol:
        raise ConvergenceError(
            f"cell corrector k={k}, column {gamma}: residual {residual:.3e} > tol {tol:.1e} "
            f"after {iterations} iterations (contrast too high for the reference medium?)"
        )
    tail = _spectral_tail(chi, d)
    if tail > resolution_tol:
        raise UnderResolvedError(
            f"cell corrector k={k} has relative spectral tail {tail:.2e} at N={N}; increase N"
        )
    log.debug("corrector k=%d gamma=%d: %d iterations, residual %.2e", k, gamma, iterations, residual)
    return chi, residual, iterations


def solve_cell_corrector(cs, k, tol=DEFAULT_TOL, maxiter=MAX_ITER, resolution_tol=1e-4):
    """Solve the k-th cell problem and return the mean-zero corrector (m x m field).

    ``k = 0`` gives the potential corrector, ``div(A grad chi_0) = -div V``;
    ``k >= 1`` gives ``div(A (grad chi_k + e_k)) = 0``.  Each column is an
    independent system.
    """
    chi, _ = _solve_corrector_columns(cs, k, tol, maxiter, resolution_tol)
    return PeriodicTensorField(chi, cs.d)


def _solve_corrector_columns(cs, k, tol, maxiter, resolution_tol):
    if not 0 <= k <= cs.d:
        raise ValueError(f"corrector index must be in 0..{cs.d}")
    if tol <= 0:
        raise ValueError("tol must be positive")
    cols, residuals = [], []
    for gamma in range(cs.m):
        chi_col, res, _ = _solve_column(cs, k, gamma, tol, maxiter, resolution_tol)
        cols.append(chi_col)
        residuals.append(res)
    # chi[gamma_row, beta_col]: stack columns along the last component axis
    return np.stack(cols, axis=1), max(residuals)


def cell_residual(cs, k, chi):
    """Relative spectral residual of the strong-form cell equation for ``chi``.

    Normalised by the forcing ``div G``; if the forcing vanishes the absolute
    residual is returned.
    """
    samples = chi.samples if isinstance(chi, PeriodicTensorField) else np.asarray(chi, dtype=float)
    num, den = 0.0, 0.0
    for gamma in range(cs.m):
        G = _cell_forcing(cs, k, gamma)
        num += np.linalg.norm(_strong_residual(cs.A.samples, samples[:, gamma], G, cs.d)) ** 2
        den += np.linalg.norm(spectral_divergence(G, cs.d)) ** 2
    num, den = np.sqrt(num), np.sqrt(den)
    return float(num / den) if den > 0 else float(num)


def compute_flux_discrepancy(cs, hom, chi, check_tol=1e-6):
    """Discrepancy between homogenized and corrected microscopic fluxes.

    Returns ``b[i, k, alpha, gamma]``.  Raises if the divergence identity
    fails by more than ``check_tol`` (relative), which signals that ``hom``
    was not assembled from these correctors.
    """
    d = cs.d
    A, V = cs.A.samples, cs.V.samples
    dchi = np.moveaxis(spectral_gradient(chi, d), 0, 3)  # (k, beta, gamma, j, grid)
    grid = (None,) * d
    b = np.empty((d, d + 1) + chi.shape[1:])
    for k in range(1, d + 1):
        b[:, k] = (
            hom.A_hat[:, :, :, k - 1].transpose(2, 0, 1)[(Ellipsis,) + grid]
            - np.moveaxis(A[:, :, :, k - 1], 2, 0)
            - np.einsum("abij...,bgj...->iag...", A, dchi[k])
        )
    b[:, 0] = (
        hom.V_hat.transpose(2, 0, 1)[(Ellipsis,) + grid]
        - np.moveaxis(V, 2, 0)
        - np.einsum("abij...,bgj...->iag...", A, dchi[0])
    )
    means = np.abs(cell_mean(b, d))
    if means.max() > check_tol:
        raise CompatibilityError(f"flux discrepancy has mean {means.max():.2e}; inconsistent homogenized set")
    div = np.linalg.norm(spectral_divergence(b, d))
    ref = max(np.linalg.norm(spectral_divergence(np.moveaxis(A, 2, 0), d)), np.linalg.norm(b), 1e-300)
    if div / ref > check_tol:
        raise CompatibilityError(f"flux discrepancy is not divergence-free ({div / ref:.2e})")
    return b


def _poisson_inverse(rhs, d, mean_tol, label):
    """Mean-zero solution of Laplace(u) = rhs on the torus, componentwise."""
    means = cell_mean(rhs, d)
    worst = np.unravel_index(np.argmax(np.abs(means)), means.shape) if means.size else ()
    if means.size and abs(means[worst]) > mean_tol:
        raise CompatibilityError(f"{label}{list(worst)} has mean {means[worst]:.3e}; torus Poisson problem unsolvable")
    N = rhs.shape[-1]
    k = derivative_wavenumbers(N)
    xi2 = sum(x**2 for x in np.meshgrid(*([k] * d), indexing="ij"))
    symbol = -(TWO_PI**2) * xi2
    inv = np.zeros_like(symbol)
    inv[symbol != 0] = 1.0 / symbol[symbol != 0]
    axes = tuple(range(rhs.ndim - d, rhs.ndim))
    return np.fft.ifftn(np.fft.fftn(rhs, axes=axes) * inv, axes=axes).real


def solve_flux_potential(b, d, tol=1e-8, mean_tol=1e-10, scale=None):
    """Antisymmetric flux potential of the discrepancy fields.

    Solves ``Laplace(theta_ik) = b_ik`` with mean zero and forms
    ``E_jik = d_j theta_ik - d_i theta_jk``.  Returns ``(theta, E, defect)``
    where ``defect`` is ``|d_j E_jik - b_ik|`` relative to ``scale``
    (default ``|b|``; pass a flux scale when ``b`` may vanish, as in 1D).
    """
    b = np.asarray(b, dtype=float)
    theta = _poisson_inverse(b, d, mean_tol, "b")
    dtheta = spectral_gradient(theta, d)  # (j, i, k, ...)
    E = dtheta - np.swapaxes(dtheta, 0, 1)
    divE = spectral_divergence(E, d)
    if scale is None:
        scale = np.linalg.norm(b)
    defect = float(np.linalg.norm(divE - b) / scale) if scale > 0 else float(np.linalg.norm(divE - b))
    if defect > tol:
        log.warning("flux potential defect %.2e exceeds %.1e", defect, tol)
    return theta, E, defect


def compute_lower_order_discrepancy(cs, hom, chi, mean_tol=1e-10):
    """Lower-order discrepancies ``W`` and their torus potentials ``vartheta``.

    ``W[i]`` (i >= 1) is ``B_hat_i - B_i - B_j d_j chi_i`` and ``W[0]`` is
    ``c_hat - c - B_i d_i chi_0``.
    """
    d = cs.d
    B, c = cs.B.samples, cs.c.samples
    dchi = np.moveaxis(spectral_gradient(chi, d), 0, 3)
    grid = (None,) * d
    W = np.empty_like(chi)
    for i in range(1, d + 1):
        W[i] = (
            hom.B_hat[:, :, i - 1][(Ellipsis,) + grid]
            - B[:, :, i - 1]
            - np.einsum("abj...,bgj...->ag...", B, dchi[i])
        )
    W[0] = hom.c_hat[(Ellipsis,) + grid] - c - np.einsum("abi...,bgi...->ag...", B, dchi[0])
    vartheta = _poisson_inverse(W, d, mean_tol, "W")
    return W, vartheta


def solve_cell_problems(cs, tol=DEFAULT_TOL, maxiter=MAX_ITER, resolution_tol=1e-4):
    """Solve every cell problem and build the full CorrectorSet.

    Returns ``(correctors, hom)``.
    """
    d, m, N = cs.d, cs.m, cs.N
    chi = np.empty((d + 1, m, m) + (N,) * d)
    residuals = {}
    for k in range(d + 1):
        chi[k], residuals[f"chi{k}"] = _solve_corrector_columns(cs, k, tol, maxiter, resolution_tol)
    hom = assemble_homogenized(cs, chi)
    b = compute_flux_discrepancy(cs, hom, chi)
    scale = max(np.linalg.norm(b), np.linalg.norm(cs.A.samples), np.linalg.norm(cs.V.samples))
    theta, E, defect = solve_flux_potential(b, d, scale=scale)
    W, vartheta = compute_lower_order_discrepancy(cs, hom, chi)
    residuals["E_divergence"] = defect
    correctors = CorrectorSet(chi, b, theta, E, W, vartheta, d, residuals)
    return correctors, hom


def dump_field(path, samples, fmt="csv"):
    """Write grid samples to ``path``.

    ``csv``: a ``# shape: ...`` header line followed by the samples in
    row-major order, one per line.  ``npy``: numpy binary format.
    """
    samples = np.asarray(samples)
    if fmt == "npy":
        np.save(path, samples)
        return
    if fmt != "csv":
        raise ValueError(f"unknown dump format {fmt!r}")
    with open(path, "w") as fh:
        fh.write("# shape: " + ",".join(str(s) for s in samples.shape) + "\n")
        np.savetxt(fh, samples.reshape(-1), fmt="%.17g")


def load_field(path):
    """Read a dump written by :func:`dump_field` (``.npy`` or CSV)."""
    if str(path).endswith(".npy"):
        return np.load(path)
    with open(path) as fh:
        header = fh.readline()
        shape = tuple(int(s) for s in header.split(":", 1)[1].split(",") if s.strip())
        data = np.loadtxt(fh, ndmin=1)
    return data.reshape(shape)
