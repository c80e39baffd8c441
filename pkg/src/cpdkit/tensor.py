"""Dense tensor algebra: unfoldings, Khatri-Rao/Hadamard products, MTTKRP.

Tensors are plain :class:`numpy.ndarray` objects.  Modes are 0-based in
the Python API.  The mode-``n`` unfolding follows the Kolda convention
with the first index varying fastest, so that for a CP model

    X_(n) = A_n @ khatri_rao([A_{N-1}, ..., A_{n+1}, A_{n-1}, ..., A_0]).T

holds exactly (descending mode order, ``n`` omitted).
"""
from __future__ import annotations

from typing import Sequence

import numpy as np

from . import _kernels


def as_tensor(T) -> np.ndarray:
    """Validate and return ``T`` as a float64 array with every mode >= 1."""
    T = np.asarray(T, dtype=np.float64)
    if T.ndim < 1:
        raise ValueError("a tensor needs at least one mode")
    if any(s < 1 for s in T.shape):
        raise ValueError(f"every mode length must be >= 1, got {T.shape}")
    return T


def _check_mode(n: int, N: int) -> int:
    if not isinstance(n, (int, np.integer)) or not 0 <= n < N:
        raise IndexError(f"mode index {n} out of range for an order-{N} tensor")
    return int(n)


def matricize(T, n: int) -> np.ndarray:
    """Mode-``n`` unfolding ``X_(n)`` of shape ``(I_n, prod of the other I_m)``."""
    T = as_tensor(T)
    n = _check_mode(n, T.ndim)
    return np.reshape(np.moveaxis(T, n, 0), (T.shape[n], -1), order="F")


def tensorize(M, shape: Sequence[int], n: int) -> np.ndarray:
    """Fold a mode-``n`` unfolding back into a tensor of the given shape."""
    M = np.asarray(M, dtype=np.float64)
    shape = tuple(int(s) for s in shape)
    n = _check_mode(n, len(shape))
    cols = int(np.prod([s for m, s in enumerate(shape) if m != n], dtype=np.int64))
    if M.ndim != 2 or M.shape != (shape[n], cols):
        raise ValueError(
            f"matrix of shape {M.shape} cannot be folded into {shape} along mode {n}"
        )
    moved = (shape[n],) + tuple(s for m, s in enumerate(shape) if m != n)
    return np.moveaxis(np.reshape(M, moved, order="F"), 0, n)


def khatri_rao(Ms: Sequence[np.ndarray]) -> np.ndarray:
    """Column-wise Kronecker product; the last matrix varies fastest."""
    Ms = [np.atleast_2d(np.asarray(M, dtype=np.float64)) for M in Ms]
    if not Ms:
        raise ValueError("khatri_rao needs at least one matrix")
    R = Ms[0].shape[1]
    if any(M.shape[1] != R for M in Ms):
        raise ValueError("all matrices must share the same column count")
    out = Ms[0]
    for M in Ms[1:]:
        out = (out[:, None, :] * M[None, :, :]).reshape(-1, R)
    return out


def hadamard(A, B) -> np.ndarray:
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    if A.shape != B.shape:
        raise ValueError(f"shape mismatch {A.shape} vs {B.shape}")
    return A * B


def _check_factors(shape, factors, skip=None):
    if len(factors) != len(shape):
        raise ValueError(f"expected {len(shape)} factor matrices, got {len(factors)}")
    R = None
    for m, F in enumerate(factors):
        if F.ndim != 2:
            raise ValueError(f"factor {m} is not a matrix")
        if m != skip and F.shape[0] != shape[m]:
            raise ValueError(
                f"factor {m} has {F.shape[0]} rows, mode length is {shape[m]}"
            )
        if R is None:
            R = F.shape[1]
        elif F.shape[1] != R:
            raise ValueError("factor matrices must share the same column count")
    return R


def mttkrp(T, factors: Sequence[np.ndarray], n: int) -> np.ndarray:
    """Matricized tensor times Khatri-Rao product, ``X_(n) @ KR(others)``.

    The factor in slot ``n`` is ignored (it may have any row count).  The
    Khatri-Rao product is never formed; see :mod:`cpdkit._kernels`.

    Returns
    -------
    numpy.ndarray
        Matrix of shape ``(I_n, R)``.
    """
    T = as_tensor(T)
    n = _check_mode(n, T.ndim)
    factors = [np.asarray(F, dtype=np.float64) for F in factors]
    _check_factors(T.shape, factors, skip=n)
    if factors[n].shape[0] != T.shape[n]:
        # the kernel packs every factor; give slot n a harmless placeholder
        factors[n] = np.zeros((T.shape[n], factors[n].shape[1]))
    return _kernels.mttkrp_kernel(T, factors, n)


def multilinear_eval(T, vs: Sequence[np.ndarray]) -> float:
    """Evaluate the multilinear form ``sum x_{i1..iN} v1[i1] ... vN[iN]``."""
    T = as_tensor(T)
    if len(vs) != T.ndim:
        raise ValueError(f"expected {T.ndim} vectors, got {len(vs)}")
    out = T
    for m in reversed(range(T.ndim)):
        v = np.asarray(vs[m], dtype=np.float64).ravel()
        if v.shape[0] != T.shape[m]:
            raise ValueError(f"vector {m} has length {v.shape[0]}, expected {T.shape[m]}")
        out = out @ v
    return float(out)


def multimode_transform(T, Ms: Sequence[np.ndarray]) -> np.ndarray:
    """Simultaneous mode products ``z_{j..} = sum t_{i..} prod_n M_n[i_n, j_n]``.

    Matrix ``n`` has ``I_n`` rows; the result has mode lengths equal to the
    column counts.
    """
    T = as_tensor(T)
    if len(Ms) != T.ndim:
        raise ValueError(f"expected {T.ndim} matrices, got {len(Ms)}")
    Z = T
    for m, M in enumerate(Ms):
        M = np.asarray(M, dtype=np.float64)
        if M.ndim != 2 or M.shape[0] != T.shape[m]:
            raise ValueError(f"matrix {m} must have {T.shape[m]} rows")
        # tensordot appends the new axis last; cycling through all modes
        # restores the original axis order
        Z = np.tensordot(Z, M, axes=([0], [0]))
    return Z


def inner(T1, T2) -> float:
    T1 = as_tensor(T1)
    T2 = as_tensor(T2)
    if T1.shape != T2.shape:
        raise ValueError(f"shape mismatch {T1.shape} vs {T2.shape}")
    return float(np.vdot(T1, T2))


def norm(T) -> float:
    """Frobenius norm."""
    return float(np.linalg.norm(np.ravel(as_tensor(T))))
