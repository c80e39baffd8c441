"""Kruskal (CP) models: reconstruction, fit metrics, normalization, matching."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _kernels
from .linalg import normalize_columns
from .tensor import as_tensor, mttkrp, norm


@dataclass
class KruskalModel:
    """CP model ``[[weights; A_0, ..., A_{N-1}]]``.

    ``normalized`` marks models whose factor columns all have unit norm
    (or are exactly zero) with the scale carried by ``weights``.
    """

    weights: np.ndarray
    factors: list[np.ndarray]
    normalized: bool = field(default=False)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64).ravel()
        self.factors = [np.asarray(F, dtype=np.float64) for F in self.factors]
        if not self.factors:
            raise ValueError("a CP model needs at least one factor")
        R = self.weights.shape[0]
        for n, F in enumerate(self.factors):
            if F.ndim != 2 or F.shape[1] != R:
                raise ValueError(
                    f"factor {n} has shape {F.shape}; every factor needs {R} columns"
                )

    @classmethod
    def from_factors(cls, factors: Sequence[np.ndarray], weights=None) -> "KruskalModel":
        R = np.asarray(factors[0]).shape[1]
        w = np.ones(R) if weights is None else weights
        return cls(w, list(factors))

    @property
    def rank(self) -> int:
        return self.weights.shape[0]

    @property
    def ndim(self) -> int:
        return len(self.factors)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(F.shape[0] for F in self.factors)

    def copy(self) -> "KruskalModel":
        return KruskalModel(self.weights.copy(), [F.copy() for F in self.factors], self.normalized)


def reconstruct(m: KruskalModel) -> np.ndarray:
    """Dense tensor ``y_{i..} = sum_r w_r prod_n A_n[i_n, r]``."""
    return _kernels.reconstruct_kernel(m.weights, m.factors)


def _model_norm_sq(m: KruskalModel) -> float:
    G = np.ones((m.rank, m.rank))
    for F in m.factors:
        G *= F.T @ F
    return float(m.weights @ G @ m.weights)


def residual_and_fitness(m: KruskalModel, X, method: str = "full") -> tuple[float, float]:
    """Residual ``r = ||X - Y||_F`` and fitness ``1 - r/||X||_F``.

    ``method="full"`` builds the reconstruction; ``method="gram"`` expands
    ``||X||^2 - 2<X, Y> + ||Y||^2`` with one MTTKRP and Gram matrices.  The
    Gram route loses accuracy once ``r`` falls below ~1e-8 ``||X||``.
    """
    X = as_tensor(X)
    if X.shape != m.shape:
        raise ValueError(f"model shape {m.shape} does not match tensor {X.shape}")
    xnorm = norm(X)
    if xnorm == 0:
        raise ValueError("fitness is undefined for an all-zero tensor")
    if method == "full":
        r = norm(X - reconstruct(m))
    elif method == "gram":
        last = m.ndim - 1
        M = mttkrp(X, m.factors, last)
        ip = float(np.sum(M * (m.factors[last] * m.weights)))
        r = float(np.sqrt(max(xnorm**2 - 2.0 * ip + _model_norm_sq(m), 0.0)))
    else:
        raise ValueError(f"unknown residual method {method!r}")
    return r, 1.0 - r / xnorm


def normalize_model(m: KruskalModel) -> KruskalModel:
    """Unit-norm factor columns with the scale (and sign) moved to the weights.

    Weights come out nonnegative: a negative weight flips the matching
    column of the first factor instead.
    """
    weights = m.weights.copy()
    factors = []
    for F in m.factors:
        Fn, norms = normalize_columns(F)
        weights *= norms
        factors.append(Fn)
    neg = weights < 0
    if np.any(neg):
        factors[0] = factors[0].copy()
        factors[0][:, neg] *= -1.0
        weights[neg] *= -1.0
    return KruskalModel(weights, factors, normalized=True)


def match_components(m: KruskalModel, ref: KruskalModel) -> np.ndarray:
    """Greedy column matching by congruence ``prod_n |<a_r, ahat_z>|``.

    Both models must already be normalized.  Returns ``perm`` with
    component ``r`` of ``m`` paired to component ``perm[r]`` of ``ref``.
    """
    if m.rank != ref.rank:
        raise ValueError(f"rank mismatch: {m.rank} vs {ref.rank}")
    if m.shape != ref.shape:
        raise ValueError(f"shape mismatch: {m.shape} vs {ref.shape}")
    C = np.ones((m.rank, m.rank))
    for A, B in zip(m.factors, ref.factors):
        C *= np.abs(A.T @ B)
    perm = np.full(m.rank, -1)
    C = C.copy()
    for _ in range(m.rank):
        r, z = np.unravel_index(np.argmax(C), C.shape)
        perm[r] = z
        C[r, :] = -1.0
        C[:, z] = -1.0
    return perm


def aligned_factor_errors(m: KruskalModel, ref: KruskalModel):
    """Per-mode ``||A_n - Ahat_n P S_n||_F`` after matching, plus weight error.

    The weight error is relative, ``||w - what P|| / ||what||``.
    """
    a = normalize_model(m)
    b = normalize_model(ref)
    perm = match_components(a, b)
    errs = np.empty(a.ndim)
    for n, (A, B) in enumerate(zip(a.factors, b.factors)):
        Bp = B[:, perm]
        sgn = np.sign(np.sum(A * Bp, axis=0))
        sgn[sgn == 0] = 1.0
        errs[n] = np.linalg.norm(A - Bp * sgn)
    wref = b.weights[perm]
    scale = np.linalg.norm(wref)
    werr = np.linalg.norm(a.weights - wref) / (scale if scale > 0 else 1.0)
    return errs, float(werr)


def factor_recovery_error(m: KruskalModel, ref: KruskalModel) -> float:
    """Largest aligned factor error plus the relative weight mismatch."""
    errs, werr = aligned_factor_errors(m, ref)
    return float(errs.max() + werr)
