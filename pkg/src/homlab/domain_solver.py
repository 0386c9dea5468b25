"""Q1 finite elements for Neumann problems on the unit interval or square.

The bilinear form is

    B[u, phi] = int (a_ij^{ab} d_j u^b + V_i^{ab} u^b) d_i phi^a
              + int (B_i^{ab} d_i u^b + c^{ab} u^b + lam u^a) phi^a

with coefficients evaluated at ``x / eps`` (oscillating problem) or held
constant (homogenized problem).  Right-hand sides are
``-int f . grad phi + int F phi + int_{boundary} g phi``.

Degrees of freedom are ordered component-major: ``dof = alpha * n_nodes + node``
with nodes in C order of the ``(n + 1)^d`` grid.
"""

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import gmres, splu

from .errors import CoercivityError, CompatibilityError, ConvergenceError, UnderResolvedError
from .grid import GAUSS_POINTS, GridFunction, grid_norm, to_gauss, trapezoid_weights

__all__ = [
    "ProblemData",
    "SolveResult",
    "coercivity_threshold",
    "solve_oscillating",
    "solve_homogenized_problem",
    "solve_boundary_corrector",
    "compatibility_residual",
    "assemble_load",
    "grid_norm",
    "l2_error",
    "gradient_error",
    "psi_deviation",
    "rounding_floor",
]

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-10
MIN_CELLS_PER_PERIOD = 16
DIRECT_LIMIT = 300_000
CHUNK_ENTRIES = 1 << 22


@dataclass(frozen=True)
class ProblemData:
    """Right-hand data of a Neumann problem.

    Each entry is ``None`` (zero), a GridFunction, or a callable.  ``F(x)`` and
    ``f(x)`` receive coordinates of shape ``(d, ...)`` and return arrays of
    shape ``(m, ...)`` and ``(m, d, ...)``; for ``m = 1`` the leading component
    axis may be dropped.  ``g(x, normal)`` also receives the outward unit
    normal of the face (shape ``(d,)``).
    """

    F: object = None
    f: object = None
    g: object = None


@dataclass(frozen=True)
class SolveResult:
    """Solution with its algebraic diagnostics.

    ``tolerance`` is the residual target actually enforced: the requested
    tolerance, raised to the double-precision rounding floor when that is
    larger (fine grids).
    """

    u: GridFunction
    iterations: int
    relative_residual: float
    compatibility_residual: np.ndarray
    tolerance: float = DEFAULT_TOL


def coercivity_threshold(mu, kappa, m, d):
    """Computable lambda0 above which the bilinear form is coercive."""
    return kappa**2 * m * d / mu + 2 * kappa * m + 1.0


# --------------------------------------------------------------------------
# reference element


def _reference_element(d, h):
    N1 = np.stack([1 - GAUSS_POINTS, GAUSS_POINTS], axis=1)  # (g, a)
    dN1 = np.array([[-1.0, 1.0]] * 2) / h
    if d == 1:
        return N1, dN1[:, :, None], np.full(2, h / 2)
    N = np.einsum("gA,hB->ghAB", N1, N1).reshape(4, 4)
    dN0 = np.einsum("gA,hB->ghAB", dN1, N1).reshape(4, 4)
    dN1_ = np.einsum("gA,hB->ghAB", N1, dN1).reshape(4, 4)
    return N, np.stack([dN0, dN1_], axis=-1), np.full(4, (h / 2) ** 2)


def _connectivity(n, d, start, stop):
    c0 = np.arange(start, stop)
    if d == 1:
        return np.stack([c0, c0 + 1], axis=1)
    c1 = np.arange(n)
    base = (c0[:, None] * (n + 1) + c1[None, :]).ravel()
    return np.stack([base, base + 1, base + n + 1, base + n + 2], axis=1)


def _gauss_axes(n, h, start, stop):
    first = ((np.arange(start, stop)[:, None] + GAUSS_POINTS[None, :]) * h).ravel()
    full = ((np.arange(n)[:, None] + GAUSS_POINTS[None, :]) * h).ravel()
    return first, full


def _cells_by_gauss(arr, d, rows):
    """Reshape ``comp + (2 rows, 2 n)`` gauss samples to ``comp + (cells, g)``."""
    k = arr.ndim - d
    comp = arr.shape[:k]
    if d == 1:
        return arr.reshape(comp + (rows, 2))
    n = arr.shape[-1] // 2
    arr = arr.reshape(comp + (rows, 2, n, 2))
    arr = np.moveaxis(arr, k + 1, k + 2)  # (rows, n, 2, 2)
    return arr.reshape(comp + (rows * n, 4))


def _gauss_coordinates(n, d, start, stop):
    h = 1.0 / n
    first, full = _gauss_axes(n, h, start, stop)
    if d == 1:
        return first.reshape(1, stop - start, 2)
    X = np.stack(np.meshgrid(first, full, indexing="ij"))
    return _cells_by_gauss(X, d, stop - start)


class _Oscillating:
    def __init__(self, cs, eps, adjoint=False, lower_order=True):
        self.cs, self.eps = cs, eps
        self.m, self.d = cs.m, cs.d
        self.lam = cs.lam if lower_order else 0.0
        self.lower_order = lower_order

    def chunk(self, n, start, stop):
        h = 1.0 / n
        first, full = _gauss_axes(n, h, start, stop)
        axes = [first / self.eps] + [full / self.eps] * (self.d - 1)
        rows = stop - start
        out = {"A": _cells_by_gauss(self.cs.A.on_axes(*axes), self.d, rows)}
        if self.lower_order:
            for key in ("V", "B", "c"):
                out[key] = _cells_by_gauss(getattr(self.cs, key).on_axes(*axes), self.d, rows)
        return out


class _Constant:
    def __init__(self, hom, lower_order=True):
        self.hom = hom
        self.m, self.d = hom.m, hom.d
        self.lam = hom.lam if lower_order else 0.0
        self.lower_order = lower_order

    def chunk(self, n, start, stop):
        cells = (stop - start) * n ** (self.d - 1)
        ng = 2**self.d

        def bc(t):
            return np.broadcast_to(t[..., None, None], t.shape + (cells, ng))

        out = {"A": bc(self.hom.A_hat)}
        if self.lower_order:
            out.update(V=bc(self.hom.V_hat), B=bc(self.hom.B_hat), c=bc(self.hom.c_hat))
        return out


def _row_chunks(n, d, m):
    per_row = n ** (d - 1) * (m * 2**d) ** 2
    rows = max(1, CHUNK_ENTRIES // per_row)
    for start in range(0, n, rows):
        yield start, min(n, start + rows)


def _assemble_matrix(coeffs, n):
    d, m = coeffs.d, coeffs.m
    h = 1.0 / n
    nn = (n + 1) ** d
    N, dN, w = _reference_element(d, h)
    Nw = N * w[:, None]
    dNw = dN * w[:, None, None]
    data, rows, cols = [], [], []
    for start, stop in _row_chunks(n, d, m):
        co = coeffs.chunk(n, start, stop)
        Ke = np.einsum("xyijcg,gqj,gpi->cxpyq", co["A"], dN, dNw, optimize=True)
        if coeffs.lower_order:
            Ke += np.einsum("xyicg,gq,gpi->cxpyq", co["V"], N, dNw, optimize=True)
            Ke += np.einsum("xyicg,gqi,gp->cxpyq", co["B"], dN, Nw, optimize=True)
            Ke += np.einsum("xycg,gq,gp->cxpyq", co["c"], N, Nw, optimize=True)
        if coeffs.lam:
            mass = np.einsum("gq,gp->pq", N, Nw)
            for a in range(m):
                Ke[:, a, :, a, :] += coeffs.lam * mass
        conn = _connectivity(n, d, start, stop)
        dof = (np.arange(m)[None, :, None] * nn + conn[:, None, :])  # (cell, alpha, a)
        na = conn.shape[1]
        r = np.broadcast_to(dof[:, :, :, None, None], (len(conn), m, na, m, na))
        c = np.broadcast_to(dof[:, None, None, :, :], (len(conn), m, na, m, na))
        data.append(Ke.ravel())
        rows.append(r.ravel())
        cols.append(c.ravel())
    size = m * nn
    K = sp.coo_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))), shape=(size, size)
    ).tocsr()
    K.sum_duplicates()
    return K


def _as_component_array(values, m, extra, shape):
    arr = np.asarray(values, dtype=float)
    target = (m,) + extra + shape
    if arr.shape == target:
        return arr
    if m == 1 and arr.shape == extra + shape:
        return arr[None]
    if arr.shape == ():
        return np.broadcast_to(arr, target)
    raise ValueError(f"data returned shape {arr.shape}, expected {target}")


def _gauss_from_grid(gf, n, d, start, stop):
    k = gf.values.ndim - d
    sl = [slice(None)] * gf.values.ndim
    sl[k] = slice(start, stop + 1)
    g = to_gauss(gf.values[tuple(sl)], d)
    comp = g.shape[:k]
    return _cells_by_gauss(g.reshape(comp + (2 * (stop - start),) + (2 * n,) * (d - 1)), d, stop - start)


def _boundary_load(g, n, d, m):
    """Boundary term ``int g phi`` as an ``(m, nodes)`` array."""
    nn = (n + 1) ** d
    out = np.zeros((m, nn))
    if g is None:
        return out
    if d == 1:
        for node, x, normal in ((0, 0.0, -1.0), (n, 1.0, 1.0)):
            if callable(g):
                val = _as_component_array(g(np.array([[x]]), np.array([normal])), m, (), (1,))[:, 0]
            else:
                val = _as_component_array(g.values, m, (), (n + 1,))[:, node]
            out[:, node] += val
        return out
    h = 1.0 / n
    idx = np.arange(nn).reshape(n + 1, n + 1)
    t = ((np.arange(n)[:, None] + GAUSS_POINTS[None, :]) * h).ravel()  # along the face
    shape = np.stack([1 - GAUSS_POINTS, GAUSS_POINTS], axis=1)  # (g, a)
    for axis in range(2):
        for side, normal_sign in ((0, -1.0), (n, 1.0)):
            normal = np.zeros(2)
            normal[axis] = normal_sign
            nodes = idx[side, :] if axis == 0 else idx[:, side]
            if callable(g):
                x = np.empty((2, t.size))
                x[axis] = side * h
                x[1 - axis] = t
                vals = _as_component_array(g(x, normal), m, (), (t.size,)).reshape(m, n, 2)
            else:
                gv = _as_component_array(g.values, m, (), (n + 1, n + 1))
                edge = gv[:, side, :] if axis == 0 else gv[:, :, side]
                vals = edge[:, :-1, None] * shape[None, None, :, 0] + edge[:, 1:, None] * shape[None, None, :, 1]
            contrib = np.einsum("aeg,gb->aeb", vals, shape) * (h / 2)
            np.add.at(out, (slice(None), nodes[:-1]), contrib[:, :, 0])
            np.add.at(out, (slice(None), nodes[1:]), contrib[:, :, 1])
    return out


def assemble_load(data, n, d, m):
    """Load vector ``-int f . grad phi + int F phi + int g phi`` (flattened)."""
    h = 1.0 / n
    nn = (n + 1) ** d
    N, dN, w = _reference_element(d, h)
    out = np.zeros((m, nn))
    for start, stop in _row_chunks(n, d, m):
        conn = _connectivity(n, d, start, stop)
        cells = len(conn)
        local = np.zeros((m, cells, conn.shape[1]))
        if data.F is not None:
            F = _evaluate_volume(data.F, n, d, start, stop, m, ())
            local += np.einsum("acg,gp,g->acp", F, N, w)
        if data.f is not None:
            f = _evaluate_volume(data.f, n, d, start, stop, m, (d,))
            local -= np.einsum("aicg,gpi,g->acp", f, dN, w)
        for a in range(m):
            np.add.at(out[a], conn, local[a])
    out += _boundary_load(data.g, n, d, m)
    return out.ravel()


def _evaluate_volume(src, n, d, start, stop, m, extra):
    rows = stop - start
    cells = rows * n ** (d - 1)
    if isinstance(src, GridFunction):
        vals = _gauss_from_grid(src, n, d, start, stop)
    elif callable(src):
        vals = src(_gauss_coordinates(n, d, start, stop))
    else:
        vals = np.asarray(src, dtype=float)
    return _as_component_array(vals, m, extra, (cells, 2**d))


def _solve_system(K, rhs, tol, symmetric=False):
    bnorm = np.linalg.norm(rhs)
    if bnorm == 0.0:
        return np.zeros_like(rhs), 0, 0.0, tol
    if K.shape[0] <= DIRECT_LIMIT:
        lu = splu(K.tocsc())
        x = lu.solve(rhs)
        iterations = 1
        rel = np.linalg.norm(rhs - K @ x) / bnorm
        log.debug("iteration %d residual %.3e", iterations, rel)
        while rel > max(tol, rounding_floor(K, x, bnorm)) and iterations < 6:
            x += lu.solve(rhs - K @ x)
            iterations += 1
            rel = np.linalg.norm(rhs - K @ x) / bnorm
            log.debug("iteration %d residual %.3e", iterations, rel)
    else:
        import pyamg

        ml = pyamg.smoothed_aggregation_solver(
            K.tocsr(), symmetry="hermitian" if symmetric else "nonsymmetric", max_coarse=500
        )
        M = ml.aspreconditioner(cycle="V")
        iterations = 0

        def report(res):
            nonlocal iterations
            iterations += 1
            log.debug("iteration %d residual %.3e", iterations, res)

        x = np.zeros_like(rhs)
        rel = np.inf
        for _ in range(3):
            x, _info = gmres(K, rhs, x0=x, M=M, rtol=0.1 * tol, atol=0.0, restart=60, maxiter=5,
                             callback=report, callback_type="pr_norm")
            previous, rel = rel, np.linalg.norm(rhs - K @ x) / bnorm
            # the true residual can stall above the preconditioned one near the rounding floor
            if rel <= max(tol, rounding_floor(K, x, bnorm)) or rel > 0.5 * previous:
                break
    target = max(tol, rounding_floor(K, x, bnorm))
    if rel > target:
        raise ConvergenceError(f"linear solve stagnated at relative residual {rel:.3e} (tol {target:.1e})")
    if target > tol:
        log.debug("tolerance %.1e is below the rounding floor %.1e of this system", tol, target)
    return x, iterations, float(rel), float(target)


def rounding_floor(K, x, bnorm):
    """Smallest relative residual resolvable in double precision for ``K x = b``.

    ``u * || |K| |x| || / ||b||``: rounding the exact solution to doubles
    already leaves a residual of this size, and it grows like the condition
    number (``h^-2``) on fine grids.
    """
    return float(np.finfo(float).eps * np.linalg.norm(abs(K) @ np.abs(x)) / bnorm)


def _check_resolution(n, eps):
    if n * eps < MIN_CELLS_PER_PERIOD * (1 - 1e-12):
        raise UnderResolvedError(
            f"n*eps = {n * eps:g} < {MIN_CELLS_PER_PERIOD}: fewer than {MIN_CELLS_PER_PERIOD} cells per period"
        )


def _hom_constants(hom):
    lo, hi = hom.ellipticity_bounds()
    mu = min(lo, 1.0 / hi) if lo > 0 else 0.0
    kappa = max(float(np.max(np.abs(t))) if t.size else 0.0 for t in (hom.V_hat, hom.B_hat, hom.c_hat))
    return mu, kappa


def solve_oscillating(cs, eps, data, n, adjoint=False, tol=DEFAULT_TOL):
    """Galerkin solution of the oscillating Neumann problem on the unit box.

    ``adjoint=True`` solves with the adjoint bilinear form (the transpose of
    the operator matrix).  Refuses under-resolved grids and shifts below the
    coercivity threshold.
    """
    if n < 8:
        raise UnderResolvedError("need at least 8 cells per axis")
    _check_resolution(n, eps)
    lam0 = coercivity_threshold(cs.mu, cs.kappa, cs.m, cs.d)
    if cs.lam < lam0 * (1 - 1e-12):
        raise CoercivityError(cs.lam, lam0)
    K = _assemble_matrix(_Oscillating(cs, eps), n)
    return _finish_solve(K, data, n, cs.d, cs.m, tol, adjoint, symmetric=False,
                         coeffs=_Oscillating(cs, eps))


def solve_homogenized_problem(hom, data, n, tol=DEFAULT_TOL, adjoint=False):
    """Galerkin solution of the constant-coefficient homogenized Neumann problem."""
    if n < 8:
        raise UnderResolvedError("need at least 8 cells per axis")
    mu, kappa = _hom_constants(hom)
    if mu <= 0:
        raise CoercivityError(hom.lam, np.inf)
    lam0 = coercivity_threshold(mu, kappa, hom.m, hom.d)
    if hom.lam < lam0 * (1 - 1e-12):
        raise CoercivityError(hom.lam, lam0)
    K = _assemble_matrix(_Constant(hom), n)
    return _finish_solve(K, data, n, hom.d, hom.m, tol, adjoint, symmetric=False, coeffs=_Constant(hom))


def _finish_solve(K, data, n, d, m, tol, adjoint, symmetric, coeffs):
    if adjoint:
        K = K.T.tocsr()
    rhs = assemble_load(data, n, d, m)
    x, its, rel, target = _solve_system(K, rhs, tol, symmetric)
    u = GridFunction(x.reshape((m,) + (n + 1,) * d), d)
    compat = _compatibility(coeffs, n, data, u) if not adjoint else np.full(m, np.nan)
    return SolveResult(u, its, rel, compat, target)


def _element_values(u, n, d, start, stop):
    conn = _connectivity(n, d, start, stop)
    vals = u.values if u.values.ndim > d else u.values[None]
    flat = vals.reshape(vals.shape[0], -1)
    return flat[:, conn]  # (m, cells, a)


def _compatibility(coeffs, n, data, u):
    d, m = coeffs.d, coeffs.m
    h = 1.0 / n
    N, dN, w = _reference_element(d, h)
    total = np.zeros(m)
    for start, stop in _row_chunks(n, d, m):
        U = _element_values(u, n, d, start, stop)
        ug = np.einsum("bcp,gp->bcg", U, N)
        dug = np.einsum("bcp,gpi->bicg", U, dN)
        integrand = coeffs.lam * ug
        if coeffs.lower_order:
            co = coeffs.chunk(n, start, stop)
            integrand = integrand + np.einsum("abicg,bicg->acg", co["B"], dug)
            integrand = integrand + np.einsum("abcg,bcg->acg", co["c"], ug)
        total += np.einsum("acg,g->a", integrand, w)
    source = assemble_load(ProblemData(F=data.F, g=data.g), n, d, m).reshape(m, -1).sum(axis=1)
    return total - source


def compatibility_residual(coeffs, eps, data, u):
    """``int (B grad u + c u + lam u) - int F - int g`` for each component.

    ``coeffs`` is a CoefficientSet (evaluated at ``x / eps``) or a
    HomogenizedSet (``eps`` ignored).  ``u`` may be any grid function, e.g.
    an interpolated exact solution.
    """
    if hasattr(coeffs, "A_hat"):
        provider = _Constant(coeffs)
    else:
        provider = _Oscillating(coeffs, eps)
    return _compatibility(provider, u.n, data, u)


def solve_boundary_corrector(cs, eps, hom, n, tol=DEFAULT_TOL, compat_tol=1e-8):
    """Matrix-valued Neumann boundary corrector associated with ``V``.

    Solves ``-div(A_eps grad Psi) = div(V_eps)`` with conormal data
    ``n . (V_hat - V_eps)`` column by column, normalised so ``Psi - I`` has
    zero mean.  Returns a GridFunction with values of shape ``(m, m) + grid``.
    """
    _check_resolution(n, eps)
    d, m = cs.d, cs.m
    nn = (n + 1) ** d
    psi = np.zeros((m, m) + (n + 1,) * d)
    eye = np.eye(m)
    for gamma in range(m):
        psi[:, gamma] = eye[:, gamma][(Ellipsis,) + (None,) * d]
    if cs.V.is_constant():
        return GridFunction(psi, d)

    K = _assemble_matrix(_Oscillating(cs, eps, lower_order=False), n)
    # pin node 0 of every component; the mean is fixed afterwards
    free = np.ones(m * nn, dtype=bool)
    free[np.arange(m) * nn] = False
    K_free = K[free][:, free].tocsr()
    h = 1.0 / n
    N, dN, w = _reference_element(d, h)
    weights = trapezoid_weights(n, d).ravel()
    for gamma in range(m):
        rhs = np.zeros((m, nn))
        for start, stop in _row_chunks(n, d, m):
            rows = stop - start
            first, full = _gauss_axes(n, h, start, stop)
            axes = [first / eps] + [full / eps] * (d - 1)
            Vg = _cells_by_gauss(cs.V.on_axes(*axes)[:, gamma], d, rows)
            local = -np.einsum("aicg,gpi,g->acp", Vg, dN, w)
            conn = _connectivity(n, d, start, stop)
            for a in range(m):
                np.add.at(rhs[a], conn, local[a])
        flux = hom.V_hat[:, gamma]
        rhs += _boundary_load(lambda x, normal: np.einsum("ai,i->a", flux, normal)[:, None] * np.ones(x.shape[1]),
                              n, d, m)
        per_comp = rhs.sum(axis=1)
        scale = max(np.linalg.norm(rhs), 1e-300)
        if np.max(np.abs(per_comp)) > compat_tol * scale:
            raise CompatibilityError(f"boundary corrector data defect {per_comp} exceeds {compat_tol:g}")
        x = np.zeros(m * nn)
        x[free], _, _, _ = _solve_system(K_free, rhs.ravel()[free], tol, symmetric=cs.symmetric_A)
        col = x.reshape(m, nn)
        col -= (col @ weights)[:, None]
        psi[:, gamma] += col.reshape((m,) + (n + 1,) * d)
    return GridFunction(psi, d)


def psi_deviation(psi):
    """``max |Psi - I|`` over nodes and matrix entries."""
    m = psi.values.shape[0]
    eye = np.eye(m)[(Ellipsis,) + (None,) * psi.d]
    return float(np.max(np.abs(psi.values - eye)))


def l2_error(u, exact):
    """L2 distance between the Q1 interpolant of ``u`` and the function ``exact``.

    Uses the 2-point Gauss rule per cell; ``exact(x)`` follows the ProblemData
    calling convention.
    """
    n, d = u.n, u.d
    m = u.values.shape[0] if u.values.ndim > d else 1
    values = u.values if u.values.ndim > d else u.values[None]
    total = 0.0
    w = (0.5 / n) ** d
    for start, stop in _row_chunks(n, d, m):
        ug = _gauss_from_grid(GridFunction(values, d), n, d, start, stop)
        ex = _as_component_array(exact(_gauss_coordinates(n, d, start, stop)), m, (), ug.shape[1:])
        total += float(np.sum((ug - ex) ** 2)) * w
    return float(np.sqrt(total))


def gradient_error(u, exact_grad):
    """L2 distance between the element gradient of ``u`` and ``exact_grad``.

    ``exact_grad(x)`` returns shape ``(m, d, ...)`` (or ``(d, ...)`` for one
    component); evaluated at the 2-point Gauss nodes of every cell.
    """
    n, d = u.n, u.d
    values = u.values if u.values.ndim > d else u.values[None]
    m = values.shape[0]
    gf = GridFunction(values, d)
    _, dN, w = _reference_element(d, 1.0 / n)
    total = 0.0
    for start, stop in _row_chunks(n, d, m):
        U = _element_values(gf, n, d, start, stop)
        grad = np.einsum("bcp,gpi->bicg", U, dN)
        ex = _as_component_array(exact_grad(_gauss_coordinates(n, d, start, stop)), m, (d,), grad.shape[2:])
        total += float(np.einsum("bicg,g->", (grad - ex) ** 2, w))
    return float(np.sqrt(total))
