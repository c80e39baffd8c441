"""Seeded synthetic tensors for the convergence and conditioning experiments."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .model import KruskalModel, normalize_model, reconstruct


def _shape(shape) -> tuple[int, ...]:
    shape = tuple(int(s) for s in shape)
    if not shape or any(s < 1 for s in shape):
        raise ValueError(f"invalid shape {shape}")
    return shape


def random_cp(shape: Sequence[int], R: int, seed=None):
    """Tensor built from uniform(0, 1) factors.

    Returns
    -------
    X : numpy.ndarray
    model : KruskalModel
        The normalized ground truth.
    """
    shape = _shape(shape)
    if R < 1:
        raise ValueError("rank must be >= 1")
    rng = np.random.default_rng(seed)
    m = KruskalModel(np.ones(R), [rng.uniform(0.0, 1.0, size=(s, R)) for s in shape])
    return reconstruct(m), normalize_model(m)


def collinear_factor(s: int, R: int, C: float, rng) -> np.ndarray:
    """``s x R`` matrix with unit columns and pairwise inner products ``C``."""
    if not 0.0 <= C < 1.0:
        raise ValueError("collinearity must lie in [0, 1)")
    if R > s:
        raise ValueError(f"rank {R} exceeds mode length {s}")
    Q, _ = np.linalg.qr(rng.standard_normal((s, R)))
    gram = (1.0 - C) * np.eye(R) + C * np.ones((R, R))
    K = np.linalg.cholesky(gram).T
    return Q @ K


def collinear_cp(shape: Sequence[int], R: int, C: float, seed=None):
    """Tensor whose factors all have column collinearity ``C``; weights ``1..R``."""
    shape = _shape(shape)
    rng = np.random.default_rng(seed)
    factors = [collinear_factor(s, R, C, rng) for s in shape]
    m = KruskalModel(np.arange(1.0, R + 1.0), factors, normalized=True)
    return reconstruct(m), m


def add_gaussian_noise(X, sigma: float, seed=None) -> np.ndarray:
    """``X`` plus i.i.d. Normal(0, sigma^2) entries."""
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    X = np.asarray(X, dtype=np.float64)
    if sigma == 0:
        return X.copy()
    rng = np.random.default_rng(seed)
    return X + sigma * rng.standard_normal(X.shape)


def _scaled_gaussian(shape, eps: float, rng) -> np.ndarray:
    D = rng.standard_normal(shape)
    return D * (eps / np.linalg.norm(D))


def planted_orthogonal_cp(shape: Sequence[int], R_full: int, eps_perp: float, seed=None):
    """Tensor with a stationary planted half.

    The first ``R_full / 2`` columns of each factor are uniform(0, 1).  The
    remaining columns are random columns projected onto the orthogonal
    complement of the first half and normalized; a Gaussian perturbation of
    Frobenius norm ``eps_perp`` per factor is then added and the columns are
    renormalized.  All second-half weights are 1.

    Returns
    -------
    X : numpy.ndarray
    planted : KruskalModel
        Normalized model of the first half.
    """
    shape = _shape(shape)
    if R_full < 2 or R_full % 2:
        raise ValueError("R_full must be a positive even number")
    if any(s < R_full for s in shape):
        raise ValueError("R_full must not exceed any mode length")
    if eps_perp < 0:
        raise ValueError("eps_perp must be >= 0")
    rng = np.random.default_rng(seed)
    h = R_full // 2
    first, second = [], []
    for s in shape:
        A = rng.uniform(0.0, 1.0, size=(s, h))
        Q, _ = np.linalg.qr(A)
        B = rng.uniform(0.0, 1.0, size=(s, h))
        B = B - Q @ (Q.T @ B)
        B /= np.linalg.norm(B, axis=0)
        if eps_perp > 0:
            B = B + _scaled_gaussian(B.shape, eps_perp, rng)
            B /= np.linalg.norm(B, axis=0)
        first.append(A)
        second.append(B)
    planted = normalize_model(KruskalModel(np.ones(h), first))
    full = KruskalModel(
        np.concatenate([planted.weights, np.ones(h)]),
        [np.hstack([a, b]) for a, b in zip(planted.factors, second)],
    )
    return reconstruct(full), planted


def perturb_model(m: KruskalModel, eps: float, seed=None) -> KruskalModel:
    """Add Gaussian ``Delta_n`` with ``||Delta_n||_F = eps`` to every factor.

    Columns are renormalized afterwards; the weights are kept as they are.
    """
    if eps < 0:
        raise ValueError("eps must be >= 0")
    rng = np.random.default_rng(seed)
    nm = normalize_model(m)
    if eps == 0:
        return nm
    factors = []
    for F in nm.factors:
        P = F + _scaled_gaussian(F.shape, eps, rng)
        factors.append(P / np.linalg.norm(P, axis=0))
    return KruskalModel(nm.weights.copy(), factors, normalized=True)


@dataclass(frozen=True)
class GeneratorSpec:
    """Recipe for one synthetic tensor (see :func:`generate`)."""

    family: str
    shape: tuple[int, ...]
    rank: int
    collinearity: float = 0.0
    eps_perp: float = 0.0
    noise: float = 0.0
    seed: Optional[int] = 0

    def __post_init__(self):
        if self.family not in ("random", "collinear", "planted"):
            raise ValueError(f"unknown family {self.family!r}")
        if self.rank < 1:
            raise ValueError("rank must be >= 1")
        if self.noise < 0 or self.eps_perp < 0:
            raise ValueError("noise and eps_perp must be >= 0")
        if self.family == "collinear" and not 0.0 <= self.collinearity < 1.0:
            raise ValueError("collinearity must lie in [0, 1)")


def generate(spec: GeneratorSpec):
    """Build ``(X, model)`` for a spec; noise uses a seed derived from ``spec.seed``."""
    if spec.family == "random":
        X, m = random_cp(spec.shape, spec.rank, spec.seed)
    elif spec.family == "collinear":
        X, m = collinear_cp(spec.shape, spec.rank, spec.collinearity, spec.seed)
    else:
        X, m = planted_orthogonal_cp(spec.shape, spec.rank, spec.eps_perp, spec.seed)
    if spec.noise > 0:
        noise_seed = None if spec.seed is None else [spec.seed, 1]
        X = add_gaussian_noise(X, spec.noise, noise_seed)
    return X, m
