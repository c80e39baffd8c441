"""Small dense factorizations used by the CP solvers."""
from __future__ import annotations

from typing import NamedTuple

import numpy as np
import scipy.linalg
from scipy.linalg import lapack

#: Singular values at or below ``PINV_RTOL * s_max`` are treated as zero.
PINV_RTOL = 1e-12
#: Pivoted Cholesky stops once a pivot drops below this fraction of max(diag).
PIVOT_RTOL = 1e-12


class ThinSVD(NamedTuple):
    """Reduced SVD ``M = U @ diag(s) @ V.T`` with ``k = min(rows, cols)``."""

    U: np.ndarray
    s: np.ndarray
    V: np.ndarray


def _finite(M, what="input"):
    M = np.asarray(M, dtype=np.float64)
    if not np.all(np.isfinite(M)):
        raise ValueError(f"non-finite entries in {what}")
    return M


def thin_svd(M) -> ThinSVD:
    M = _finite(M)
    if M.ndim != 2:
        raise ValueError("thin_svd expects a matrix")
    U, s, Vt = np.linalg.svd(M, full_matrices=False)
    return ThinSVD(U, s, Vt.T)


def pseudoinverse(M, rel_tol: float = PINV_RTOL, svd: ThinSVD | None = None) -> np.ndarray:
    """Moore-Penrose inverse through the thin SVD.

    Singular values ``s_i <= rel_tol * s_max`` are dropped.  A precomputed
    ``svd`` of ``M`` may be passed to skip the factorization.
    """
    if rel_tol < 0:
        raise ValueError("rel_tol must be nonnegative")
    U, s, V = thin_svd(M) if svd is None else svd
    inv = np.zeros_like(s)
    if s.size and s[0] > 0:
        keep = s > rel_tol * s[0]
        inv[keep] = 1.0 / s[keep]
    return (V * inv) @ U.T


def normalize_columns(M):
    """Scale columns to unit 2-norm.

    Exactly-zero columns stay zero and report norm 0, so
    ``M == out * norms`` always holds.
    """
    M = np.asarray(M, dtype=np.float64)
    norms = np.linalg.norm(M, axis=0)
    safe = np.where(norms > 0, norms, 1.0)
    return M / safe, norms


def solve_gram_system(Z, RHS, pivot_tol: float = PIVOT_RTOL) -> np.ndarray:
    """Solve ``A @ Z = RHS`` for symmetric positive semidefinite ``Z``.

    A pivoted Cholesky factorization handles the full-rank case.  When the
    pivots reveal rank deficiency the system is regularized to
    ``Z + delta*I`` with ``delta = 1e-12 * trace(Z) / R``; an all-zero ``Z``
    yields the minimum-norm answer, zero.

    Parameters
    ----------
    Z : (R, R) array
        Symmetric to 1e-10 (relative to its largest entry).
    RHS : (I, R) array

    Returns
    -------
    (I, R) array
    """
    Z = _finite(Z, "Z")
    RHS = _finite(RHS, "right-hand side")
    R = Z.shape[0]
    if Z.shape != (R, R) or RHS.ndim != 2 or RHS.shape[1] != R:
        raise ValueError(f"incompatible shapes Z{Z.shape}, RHS{RHS.shape}")
    scale = max(1.0, float(np.max(np.abs(Z)))) if R else 1.0
    if np.max(np.abs(Z - Z.T), initial=0.0) > 1e-10 * scale:
        raise ValueError("Z is not symmetric")
    Z = 0.5 * (Z + Z.T)
    B = RHS.T
    dmax = float(np.max(np.diag(Z), initial=0.0))
    if dmax > 0:
        c, piv, rank, info = lapack.dpstrf(Z, tol=pivot_tol * dmax, lower=1)
        if info == 0 and rank == R:
            p = piv - 1
            L = np.tril(c)
            w = scipy.linalg.solve_triangular(L, B[p], lower=True, check_finite=False)
            v = scipy.linalg.solve_triangular(L.T, w, lower=False, check_finite=False)
            X = np.empty_like(v)
            X[p] = v
            return X.T
    delta = 1e-12 * float(np.trace(Z)) / R
    if delta <= 0:
        return np.zeros_like(RHS)
    try:
        cf = scipy.linalg.cho_factor(Z + delta * np.eye(R), lower=True, check_finite=False)
        return scipy.linalg.cho_solve(cf, B, check_finite=False).T
    except np.linalg.LinAlgError:
        # indefinite beyond the regularization: least-squares, minimum norm
        return np.linalg.lstsq(Z, B, rcond=None)[0].T


def orthonormal_complement(v) -> np.ndarray:
    """Orthonormal basis (s x (s-1)) of the complement of unit vector ``v``.

    Built from the Householder reflector that maps ``v`` to a multiple of
    ``e_1``; dropping its first column leaves the complement.
    """
    v = _finite(v).ravel()
    if abs(np.linalg.norm(v) - 1.0) > 1e-10:
        raise ValueError("orthonormal_complement expects a unit vector")
    s = v.shape[0]
    w = v.copy()
    w[0] += 1.0 if v[0] >= 0 else -1.0
    H = np.eye(s) - (2.0 / (w @ w)) * np.outer(w, w)
    return H[:, 1:]


def column_space_basis(M, rel_tol: float = PINV_RTOL) -> np.ndarray:
    """Orthonormal basis of ``span(M)`` for a full-column-rank ``M``."""
    M = _finite(M)
    if M.ndim != 2 or M.shape[1] > M.shape[0]:
        raise ValueError("column_space_basis needs a tall matrix")
    U, s, _ = thin_svd(M)
    if s.size == 0 or s[-1] <= rel_tol * s[0]:
        raise np.linalg.LinAlgError("matrix is rank deficient")
    return U
