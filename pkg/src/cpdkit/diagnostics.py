"""Convergence-order estimates and fixed-point defects of AMDM.

Most quantities here are evaluated through the pseudoinverse-transposes
``U_m = pinv(A_m)^T`` of the factors.  A model ``[[w; A_1..A_N]]`` is an
AMDM fixed point for tensor ``X`` when, for every mode,
``A_n diag(w) = X_(n) KR(U_m)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .linalg import PINV_RTOL, pseudoinverse, thin_svd
from .model import KruskalModel, normalize_model
from .solvers import SolverConfig, SolverError, run
from .tensor import as_tensor, khatri_rao, matricize, mttkrp, multimode_transform

#: Default regression window for convergence-order fits.
WINDOW = (1e-12, 1e-2)


class InsufficientSamplesError(ValueError):
    """Too few error samples inside the regression window."""


def theoretical_rate(N: int) -> float:
    """Per-subiteration AMDM order: positive root of ``x^(N-1) - sum_{i<N-1} x^i``.

    ``N = 2`` gives 1 (linear); ``N = 3`` the golden ratio.
    """
    if N < 2:
        raise ValueError("order must be >= 2")
    if N == 2:
        return 1.0

    def p(x):
        return x ** (N - 1) - sum(x**i for i in range(N - 1))

    lo, hi = 1.0, 2.0
    while hi - lo > 1e-15:
        mid = 0.5 * (lo + hi)
        if p(mid) < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass
class RateEstimate:
    """Slope of the ``log e_{k+1}`` against ``log e_k`` least-squares fit."""

    alpha: float
    window: list[int]
    fit_residual: float
    pairs: int


def _window_pairs(errors, lo, hi):
    e = np.asarray(errors, dtype=np.float64).ravel()
    inside = (e > lo) & (e < hi)
    idx = np.flatnonzero(inside)
    pairs = [i for i in idx if i + 1 < e.size and inside[i + 1]]
    return e, idx, pairs


def _fit(xs, ys, window):
    xs = np.log(np.asarray(xs))
    ys = np.log(np.asarray(ys))
    A = np.column_stack([xs, np.ones_like(xs)])
    coef, *_ = np.linalg.lstsq(A, ys, rcond=None)
    fit = float(np.linalg.norm(A @ coef - ys))
    return RateEstimate(float(coef[0]), window, fit, len(xs))


def empirical_order(errors: Sequence[float], lo: float = WINDOW[0], hi: float = WINDOW[1]) -> RateEstimate:
    """Estimate the convergence order of an error sequence.

    Only samples strictly inside ``(lo, hi)`` enter the fit, which uses the
    consecutive pairs ``(e_k, e_{k+1})`` with both ends inside the window.

    Raises
    ------
    InsufficientSamplesError
        Fewer than three samples (or no pair) inside the window.
    """
    e, idx, pairs = _window_pairs(errors, lo, hi)
    if idx.size < 3 or not pairs:
        raise InsufficientSamplesError(
            f"insufficient samples: {idx.size} error values inside ({lo:g}, {hi:g}), need 3"
        )
    return _fit(e[pairs], e[[i + 1 for i in pairs]], [int(i) for i in idx])


def pooled_order(sequences: Sequence[Sequence[float]], lo: float = WINDOW[0], hi: float = WINDOW[1]) -> RateEstimate:
    """One fit over the in-window pairs of several error sequences.

    ``window`` in the result lists sample counts per sequence.
    """
    xs, ys, counts = [], [], []
    for seq in sequences:
        e, idx, pairs = _window_pairs(seq, lo, hi)
        counts.append(int(idx.size))
        xs.extend(e[pairs])
        ys.extend(e[[i + 1 for i in pairs]])
    if sum(counts) < 3 or len(xs) < 2:
        raise InsufficientSamplesError(
            f"insufficient samples: {sum(counts)} values in ({lo:g}, {hi:g}) across {len(counts)} sequences"
        )
    return _fit(xs, ys, counts)


def _absorbed(m: KruskalModel) -> list[np.ndarray]:
    """Factors of the normalized model with the weights folded into mode 0."""
    nm = normalize_model(m)
    factors = [F.copy() for F in nm.factors]
    factors[0] = factors[0] * nm.weights
    return factors


def _pinv_full_rank(F: np.ndarray, n: int) -> np.ndarray:
    svd = thin_svd(F)
    if F.shape[1] > F.shape[0] or svd.s[0] == 0 or svd.s[-1] <= PINV_RTOL * svd.s[0]:
        raise np.linalg.LinAlgError(f"factor {n} does not have full column rank")
    return pseudoinverse(F, svd=svd)


def _check(m: KruskalModel, X):
    X = as_tensor(X)
    if X.shape != m.shape:
        raise ValueError(f"model shape {m.shape} does not match tensor {X.shape}")
    return X


def stationarity_residual(m: KruskalModel, X) -> np.ndarray:
    """Per-mode ``||A_n diag(w) - X_(n) KR(U_m)||_F / ||A_n diag(w)||_F``.

    Evaluated on the normalized model.
    """
    X = _check(m, X)
    nm = normalize_model(m)
    U = [_pinv_full_rank(F, n).T for n, F in enumerate(nm.factors)]
    out = np.empty(nm.ndim)
    for n, F in enumerate(nm.factors):
        D = F * nm.weights
        out[n] = np.linalg.norm(D - mttkrp(X, U, n)) / np.linalg.norm(D)
    return out


def orthonormality_matrices(m: KruskalModel, X) -> list[np.ndarray]:
    """``G^(n)[j, i] = f_X(u_i, .., u_j (slot n), .., u_i)`` from pseudoinverse rows.

    The weights are absorbed into the factors first.
    """
    X = _check(m, X)
    P = [_pinv_full_rank(F, n) for n, F in enumerate(_absorbed(m))]
    U = [Pn.T for Pn in P]
    return [P[n] @ mttkrp(X, U, n) for n in range(X.ndim)]


def orthonormality_defect(m: KruskalModel, X) -> np.ndarray:
    """Per-mode ``||G^(n) - I||_F``; zero exactly at AMDM fixed points."""
    return np.array([np.linalg.norm(G - np.eye(G.shape[0])) for G in orthonormality_matrices(m, X)])


def spectral_diagonalization_defect(m: KruskalModel, X) -> float:
    """Largest deviation of the elementary eigenvector slices from ``delta``.

    With ``Z = X`` transformed by ``pinv(A_n)`` in every mode, checks
    ``z[j, .., j, q (position p), j, .., j] = delta_{jq}`` for all ``p, j, q``.
    """
    X = _check(m, X)
    P = [_pinv_full_rank(F, n) for n, F in enumerate(_absorbed(m))]
    Z = multimode_transform(X, [Pn.T for Pn in P])
    N, R = Z.ndim, Z.shape[0]
    worst = 0.0
    for p in range(N):
        for j in range(R):
            idx = [j] * N
            for q in range(R):
                idx[p] = q
                worst = max(worst, abs(Z[tuple(idx)] - (1.0 if q == j else 0.0)))
    return float(worst)


def rank1_singular_tuple(
    X,
    max_sweeps: int = 1000,
    tol: float = 1e-14,
    init: Optional[Sequence[np.ndarray]] = None,
    seed: Optional[int] = 0,
):
    """Singular value and unit vectors of ``X`` from a rank-1 AMDM fixed point.

    Parameters
    ----------
    init : sequence of vectors, optional
        Starting vector per mode; selects the basin of attraction.

    Returns
    -------
    sigma : float
    phis : list of unit vectors
        ``sigma = f_X(phi_1, .., phi_N)`` and contracting ``X`` with every
        ``phi`` except mode ``n`` gives ``sigma * phi_n``.

    Raises
    ------
    SolverError
        No fixed point within ``max_sweeps``.
    """
    X = as_tensor(X)
    start = None
    if init is not None:
        if len(init) != X.ndim:
            raise ValueError(f"expected {X.ndim} initial vectors")
        start = KruskalModel(np.ones(1), [np.asarray(v, dtype=np.float64).reshape(-1, 1) for v in init])
    cfg = SolverConfig(rank=1, algorithm="amdm", max_sweeps=max_sweeps, tol_change=tol, tol_resid=0.0, seed=seed)
    res = run(X, cfg, init=start)
    if not res.converged:
        raise SolverError(f"rank-1 iteration did not converge in {max_sweeps} sweeps")
    return float(res.model.weights[0]), [F[:, 0].copy() for F in res.model.factors]


def backward_error(m: KruskalModel, X, n: int, z) -> tuple[float, float]:
    """``(||(Y_(n) - X_(n)) z||, ||X_(n) z_perp||)`` for probe vector ``z``.

    ``z_perp`` is the part of ``z`` orthogonal to the span of the Khatri-Rao
    product of the other factors.  Both numbers coincide at stationary
    points of the ALS objective.
    """
    from .model import reconstruct

    X = _check(m, X)
    z = np.asarray(z, dtype=np.float64).ravel()
    Xn = matricize(X, n)
    if z.shape[0] != Xn.shape[1]:
        raise ValueError(f"probe vector needs length {Xn.shape[1]}, got {z.shape[0]}")
    K = khatri_rao([m.factors[k] for k in reversed(range(m.ndim)) if k != n])
    coef, *_ = np.linalg.lstsq(K, z, rcond=None)
    z_perp = z - K @ coef
    Yn = matricize(reconstruct(m), n)
    return float(np.linalg.norm((Yn - Xn) @ z)), float(np.linalg.norm(Xn @ z_perp))
