"""Sparse symmetric systems: CSR storage, conjugate gradients, constraints.

Storage and matrix-vector products are backed by scipy.sparse (single
threaded, deterministic for a fixed build).  The CG iteration and the
symmetric Dirichlet elimination are implemented here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp


class CgError(RuntimeError):
    """Raised when CG encounters non-finite values or loses positivity."""


@dataclass(frozen=True)
class CgReport:
    iterations: int
    final_relative_residual: float
    converged: bool


class SparseMatrix:
    """Square or rectangular CSR matrix with deterministic products.

    Supports `A @ x`, scalar scaling (`c * A`), and `A + B`.  Duplicate
    triplets are summed on construction; stored values with magnitude
    below 1e-300 are dropped.
    """

    def __init__(self, csr: sp.csr_matrix):
        csr = csr.tocsr().astype(np.float64)
        csr.sum_duplicates()
        csr.sort_indices()
        tiny = np.abs(csr.data) < 1e-300
        if tiny.any():
            csr.data[tiny] = 0.0
            csr.eliminate_zeros()
        self._csr = csr

    @property
    def csr(self) -> sp.csr_matrix:
        return self._csr

    @property
    def nrows(self) -> int:
        return self._csr.shape[0]

    @property
    def ncols(self) -> int:
        return self._csr.shape[1]

    @property
    def nnz(self) -> int:
        return self._csr.nnz

    @property
    def row_offsets(self) -> np.ndarray:
        return self._csr.indptr

    @property
    def col_indices(self) -> np.ndarray:
        return self._csr.indices

    @property
    def values(self) -> np.ndarray:
        return self._csr.data

    def __matmul__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.ncols,):
            raise ValueError(f"shape mismatch: matrix is {self._csr.shape}, vector is {x.shape}")
        return self._csr @ x

    def __add__(self, other: "SparseMatrix") -> "SparseMatrix":
        if self._csr.shape != other._csr.shape:
            raise ValueError(f"shape mismatch: {self._csr.shape} vs {other._csr.shape}")
        return SparseMatrix(self._csr + other._csr)

    def __mul__(self, c: float) -> "SparseMatrix":
        return SparseMatrix(self._csr * float(c))

    __rmul__ = __mul__

    def diagonal(self) -> np.ndarray:
        return self._csr.diagonal()

    def toarray(self) -> np.ndarray:
        return self._csr.toarray()

    def transpose(self) -> "SparseMatrix":
        return SparseMatrix(self._csr.transpose().tocsr())

    def is_symmetric(self, rtol: float = 1e-12) -> bool:
        d = self._csr - self._csr.transpose()
        scale = max(np.abs(self._csr.data).max(initial=0.0), 1e-300)
        return np.abs(d.data).max(initial=0.0) <= rtol * scale


def from_triplets(nrows: int, ncols: int, triplets) -> SparseMatrix:
    """Build a SparseMatrix from (rows, cols, values) arrays or tuples.

    Accepts either a 3-tuple of equal-length arrays or an iterable of
    (i, j, v) triples.  Duplicate entries are summed.  Out-of-range
    indices raise ValueError.
    """
    if isinstance(triplets, tuple) and len(triplets) == 3:
        rows, cols, vals = (np.asarray(a) for a in triplets)
    else:
        items = list(triplets)
        if items:
            rows, cols, vals = (np.asarray(a) for a in zip(*items))
        else:
            rows = cols = np.zeros(0, dtype=np.int64)
            vals = np.zeros(0)
    rows = rows.astype(np.int64).ravel()
    cols = cols.astype(np.int64).ravel()
    vals = np.asarray(vals, dtype=np.float64).ravel()
    if not (rows.shape == cols.shape == vals.shape):
        raise ValueError("rows, cols and values must have equal length")
    if rows.size and (rows.min() < 0 or rows.max() >= nrows
                      or cols.min() < 0 or cols.max() >= ncols):
        raise ValueError(f"triplet index out of range for shape ({nrows}, {ncols})")
    coo = sp.coo_matrix((vals, (rows, cols)), shape=(nrows, ncols))
    return SparseMatrix(coo.tocsr())


def cg_solve(A: SparseMatrix, b: np.ndarray, tol: float = 1e-10,
             max_iter: int | None = None, x0: np.ndarray | None = None,
             jacobi: bool = False) -> tuple[np.ndarray, CgReport]:
    """Conjugate gradients for symmetric positive definite A.

    Stops when the recurrence residual satisfies ||r|| <= tol * ||b||, then
    confirms against the true residual b - A x (iterating further if the
    recurrence drifted).  Non-convergence within max_iter is reported in the
    CgReport, not raised.  NaN or Inf anywhere aborts with CgError.

    Parameters
    ----------
    x0 : optional warm-start vector (copied, not modified).
    jacobi : if True, precondition with the inverse diagonal of A.
    """
    if A.nrows != A.ncols:
        raise ValueError(f"matrix is not square: {A.csr.shape}")
    n = A.nrows
    b = np.asarray(b, dtype=np.float64)
    if b.shape != (n,):
        raise ValueError(f"rhs shape {b.shape} does not match matrix size {n}")
    if not np.isfinite(b).all():
        raise CgError("right-hand side contains non-finite entries")
    if max_iter is None:
        max_iter = 10 * n

    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return np.zeros(n), CgReport(iterations=0, final_relative_residual=0.0, converged=True)

    if x0 is None:
        x = np.zeros(n)
        r = b.copy()
    else:
        x = np.asarray(x0, dtype=np.float64).copy()
        if x.shape != (n,):
            raise ValueError(f"warm start shape {x.shape} does not match matrix size {n}")
        if not np.isfinite(x).all():
            raise CgError("warm start contains non-finite entries")
        r = b - A @ x

    if jacobi:
        d = A.diagonal()
        if (d <= 0.0).any():
            raise CgError("Jacobi preconditioner needs a strictly positive diagonal")
        minv = 1.0 / d
    else:
        minv = None

    def precond(v):
        return minv * v if minv is not None else v

    if float(np.linalg.norm(r)) / bnorm <= tol:
        true_rel = float(np.linalg.norm(b - A @ x)) / bnorm
        if true_rel <= tol:
            return x, CgReport(iterations=0, final_relative_residual=true_rel, converged=True)

    z = precond(r)
    p = z.copy()
    rz = float(r @ z)
    relres = float(np.linalg.norm(r)) / bnorm

    for k in range(1, max_iter + 1):
        Ap = A @ p
        pAp = float(p @ Ap)
        if not np.isfinite(pAp):
            raise CgError(f"non-finite curvature at iteration {k}")
        if pAp <= 0.0:
            raise CgError(f"matrix is not positive definite (pAp = {pAp:g} at iteration {k})")
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        if not np.isfinite(r).all():
            raise CgError(f"non-finite residual at iteration {k}")
        relres = float(np.linalg.norm(r)) / bnorm
        if relres <= tol:
            true_r = b - A @ x
            true_rel = float(np.linalg.norm(true_r)) / bnorm
            if true_rel <= tol:
                return x, CgReport(iterations=k, final_relative_residual=true_rel, converged=True)
            # recurrence drifted: restart from the true residual
            r = true_r
            relres = true_rel
            z = precond(r)
            p = z.copy()
            rz = float(r @ z)
            continue
        z = precond(r)
        rz_new = float(r @ z)
        beta = rz_new / rz
        rz = rz_new
        p = z + beta * p

    true_rel = float(np.linalg.norm(b - A @ x)) / bnorm
    return x, CgReport(iterations=max_iter, final_relative_residual=true_rel, converged=False)


def eliminate_dirichlet(A: SparseMatrix, b: np.ndarray, constrained) -> tuple[SparseMatrix, np.ndarray]:
    """Impose b.c. values symmetrically: zero constrained rows and columns,
    put 1 on the diagonal, and move the column contribution to the rhs.

    `constrained` is an iterable of (dof index, value) pairs.  Duplicate
    indices with equal values are merged; conflicting values raise
    ValueError.  With no constraints the inputs are returned unchanged
    (as copies).  Symmetry of A is preserved.
    """
    n = A.nrows
    b = np.asarray(b, dtype=np.float64)
    if b.shape != (n,):
        raise ValueError(f"rhs shape {b.shape} does not match matrix size {n}")

    pairs = list(constrained)
    if not pairs:
        return SparseMatrix(A.csr.copy()), b.copy()

    seen: dict = {}
    for i, v in pairs:
        i = int(i)
        v = float(v)
        if not 0 <= i < n:
            raise ValueError(f"constrained dof {i} out of range for size {n}")
        if i in seen and seen[i] != v:
            raise ValueError(f"conflicting values {seen[i]!r} and {v!r} for dof {i}")
        seen[i] = v
    idx = np.array(sorted(seen), dtype=np.int64)
    vals = np.array([seen[i] for i in idx])

    g = np.zeros(n)
    g[idx] = vals
    b2 = b - A @ g
    b2[idx] = vals

    keep = np.ones(n)
    keep[idx] = 0.0
    P = sp.diags(keep).tocsr()
    P.eliminate_zeros()
    eye_c = sp.csr_matrix((np.ones(idx.size), (idx, idx)), shape=(n, n))
    A2 = (P @ A.csr @ P) + eye_c
    return SparseMatrix(A2.tocsr()), b2
