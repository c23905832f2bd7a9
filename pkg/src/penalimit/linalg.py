"""Quadrature rules, sparse assembly helpers and the direct solver."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

log = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-10


class SingularMatrixError(RuntimeError):
    """Raised when a direct factorisation hits a zero pivot."""

    def __init__(self, message, pivot=None):
        super().__init__(message if pivot is None else f"{message} (pivot {pivot})")
        self.pivot = pivot


@dataclass(frozen=True)
class QuadratureRule:
    """Tensor Gauss-Legendre rule on the unit interval or unit square.

    ``points`` has shape (npts, d) and ``weights`` sum to one.
    """

    points: np.ndarray
    weights: np.ndarray

    @property
    def dim(self):
        return self.points.shape[1]

    def __len__(self):
        return len(self.weights)


def gauss_rule(q, d=1):
    """q-point (per direction) Gauss-Legendre rule on [0, 1]^d."""
    if not 1 <= q <= 6:
        raise ValueError(f"unsupported quadrature order q={q}; expected 1..6")
    if d not in (1, 2):
        raise ValueError(f"unsupported dimension d={d}")
    x, w = np.polynomial.legendre.leggauss(q)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    if d == 1:
        return QuadratureRule(x[:, None], w)
    # x varies fastest
    xx, yy = np.meshgrid(x, x)
    wx, wy = np.meshgrid(w, w)
    pts = np.column_stack([xx.ravel(), yy.ravel()])
    return QuadratureRule(pts, (wx * wy).ravel())


@dataclass
class LinearSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray

    def __post_init__(self):
        n, m = self.matrix.shape
        if self.rhs.shape != (n,):
            raise ValueError(f"rhs of shape {self.rhs.shape} does not match matrix {self.matrix.shape}")


def to_csr(rows, cols, vals, shape):
    """Build a CSR matrix with sorted column indices and summed duplicates.

    The summation order is that of the flattened input, so identical inputs
    give bit-identical matrices.
    """
    rows = np.asarray(rows).ravel()
    cols = np.asarray(cols).ravel()
    vals = np.asarray(vals, dtype=float).ravel()
    mat = sp.coo_matrix((vals, (rows, cols)), shape=shape).tocsr()
    mat.sum_duplicates()
    mat.sort_indices()
    return mat


def scatter_blocks(row_dofs, col_dofs, blocks, shape):
    """Accumulate local blocks ``blocks[k, i, j]`` at ``(row_dofs[k, i], col_dofs[k, j])``."""
    nb, ni = row_dofs.shape
    nj = col_dofs.shape[1]
    rows = np.broadcast_to(row_dofs[:, :, None], (nb, ni, nj))
    cols = np.broadcast_to(col_dofs[:, None, :], (nb, ni, nj))
    return to_csr(rows, cols, blocks, shape)


def scatter_vector(dofs, local, size):
    return np.bincount(np.asarray(dofs).ravel(), weights=np.asarray(local).ravel(), minlength=size)


def _structural_check(a):
    row_nnz = np.diff(a.indptr)
    nz = np.abs(a.data) > 0
    live_rows = np.zeros(a.shape[0], dtype=bool)
    live_rows[np.repeat(np.arange(a.shape[0]), row_nnz)[nz]] = True
    if not live_rows.all():
        raise SingularMatrixError("structurally singular matrix: empty row", int(np.argmin(live_rows)))
    live_cols = np.zeros(a.shape[1], dtype=bool)
    live_cols[a.indices[nz]] = True
    if not live_cols.all():
        raise SingularMatrixError("structurally singular matrix: empty column", int(np.argmin(live_cols)))


DENSE_PIVOT_LIMIT = 4000


def _zero_pivot(a):
    """Column of the first vanishing pivot of a dense LU, or None for large systems."""
    if a.shape[0] > DENSE_PIVOT_LIMIT:
        return None
    import scipy.linalg as sla

    u = sla.lu(a.toarray(), permute_l=True)[1]
    scale = max(float(np.abs(u).max(initial=0.0)), 1.0)
    bad = np.flatnonzero(np.abs(np.diag(u)) <= np.finfo(float).eps * scale * a.shape[0])
    return int(bad[0]) if bad.size else None


def _factor(a):
    try:
        return spla.splu(a.tocsc(), permc_spec="COLAMD")
    except RuntimeError as exc:
        raise SingularMatrixError(f"numerically singular matrix: {exc}", _zero_pivot(a)) from exc


def solve_direct(system, refine=1):
    """Sparse LU solve with partial pivoting and optional iterative refinement.

    The relative residual ``|Ax - b|_inf / (1 + |b|_inf)`` is checked against
    ``RESIDUAL_TOL``; a violation is logged, not raised, because heavily
    penalised systems cannot meet it in double precision.
    """
    a = sp.csr_matrix(system.matrix)
    b = np.asarray(system.rhs, dtype=float)
    if a.shape[0] != a.shape[1]:
        raise ValueError(f"matrix must be square, got {a.shape}")
    _structural_check(a)
    lu = _factor(a)
    udiag = lu.U.diagonal()
    bad = np.flatnonzero(udiag == 0)
    if bad.size:
        raise SingularMatrixError("numerically singular matrix", int(lu.perm_c[bad[0]]))
    x = lu.solve(b)
    for _ in range(refine):
        x = x + lu.solve(b - a @ x)
    if not np.all(np.isfinite(x)):
        raise SingularMatrixError("non-finite solution")
    res = residual(a, x, b)
    if res > RESIDUAL_TOL:
        log.debug("direct solve residual %.3e exceeds %.1e", res, RESIDUAL_TOL)
    return x


def residual(a, x, b):
    return float(np.max(np.abs(a @ x - b), initial=0.0) / (1.0 + np.max(np.abs(b), initial=0.0)))


def apply_constraints(system, constraints):
    """Galerkin restriction ``(P^T A P, P^T b)`` onto the constrained subspace."""
    p = constraints.prolongation
    if p.shape[0] != system.matrix.shape[0]:
        raise ValueError(
            f"prolongation has {p.shape[0]} rows but the system has {system.matrix.shape[0]} dofs"
        )
    pt = p.T.tocsr()
    mat = (pt @ system.matrix @ p).tocsr()
    mat.sort_indices()
    return LinearSystem(mat, pt @ system.rhs)


def split_basis(prolongation):
    """Unit basis change ``x = P y + Q z`` that separates the kernel of S.

    ``P`` is a 0/1 prolongation onto the continuous subspace.  Each of its
    columns keeps its first row as representative; ``Q`` selects every
    other dG dof, so ``z`` holds differences from the representative (or
    the whole value for eliminated dofs).  Returns the sparse ``T = [P | Q]``
    and the number of ``y`` columns.
    """
    p = sp.csc_matrix(prolongation)
    n_dg, n_free = p.shape
    reps = p.indices[p.indptr[:-1]]
    others = np.setdiff1d(np.arange(n_dg), reps)
    q = sp.csc_matrix((np.ones(others.size), (others, np.arange(others.size))),
                      shape=(n_dg, others.size))
    t = sp.hstack([p, q], format="csr")
    t.sort_indices()
    return t, n_free


def _solve_split(base, penalty, sigma, rhs, prolongation, max_refine):
    t, ny = split_basis(prolongation)
    tt = t.T.tocsr()
    a_hat = (tt @ base @ t).tocsr()
    q = t[:, ny:]
    s_zz = (q.T @ penalty @ q).tocsr()
    s_hat = sp.block_diag([sp.csr_matrix((ny, ny)), s_zz], format="csr")
    k = (a_hat + sigma * s_hat).tocsr()
    _structural_check(k)
    lu = _factor(k)
    b_hat = tt @ rhs
    x = lu.solve(b_hat)
    prev = np.inf
    for _ in range(max_refine):
        res = b_hat - a_hat @ x - sigma * (s_hat @ x)
        dx = lu.solve(res)
        x = x + dx
        size = np.max(np.abs(dx), initial=0.0)
        if size <= 1e-16 * np.max(np.abs(x), initial=0.0) or size >= prev:
            break
        prev = size
    return t @ x


def solve_penalized(base, penalty, sigma, rhs, prolongation=None, max_refine=20):
    """Solve ``(base + sigma * penalty) x = rhs`` for large ``sigma``.

    Forming the sum in double precision wipes out the digits of ``base``
    that carry the limit solution.  When the prolongation onto the kernel
    of ``penalty`` is known the system is rewritten in the split basis of
    :func:`split_basis`: the penalty then only touches the O(1/sigma)
    components and plain refinement is accurate for any sigma.  Without it
    the summed matrix serves as a preconditioner for a refinement whose
    residual is evaluated term by term in extended precision.
    """
    if not sigma:
        return solve_direct(LinearSystem(base, rhs))
    if prolongation is not None:
        out = _solve_split(base, penalty, sigma, np.asarray(rhs, dtype=float), prolongation, max_refine)
        if not np.all(np.isfinite(out)):
            raise SingularMatrixError("non-finite solution")
        return out
    a = (base + sigma * penalty).tocsr()
    _structural_check(a)
    lu = _factor(a)
    ext = np.longdouble
    b_ext, p_ext = base.astype(ext), penalty.astype(ext)
    sig = ext(sigma)
    r_ext = np.asarray(rhs, dtype=ext)
    x = np.zeros(len(rhs), dtype=ext)
    prev = np.inf
    for _ in range(max_refine + 1):
        res = r_ext - b_ext @ x - sig * (p_ext @ x)
        dx = lu.solve(res.astype(float))
        x = x + dx.astype(ext)
        size = np.max(np.abs(dx), initial=0.0)
        if size <= 1e-17 * np.max(np.abs(x), initial=0.0) or size >= prev:
            break
        prev = size
    out = x.astype(float)
    if not np.all(np.isfinite(out)):
        raise SingularMatrixError("non-finite solution")
    return out
