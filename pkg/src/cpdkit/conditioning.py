"""Normalized CP condition number through the Terracini matrix.

For a model with unit-norm columns ``a_r^(k)`` the Terracini matrix stacks,
for every component ``r``, the rank-1 tensor ``a_r^(1) o ... o a_r^(N)``
together with its tangent directions: in mode ``n`` the column is replaced
by an orthonormal basis of the complement of ``a_r^(n)``.  The condition
number is ``1 / sigma_min`` of that matrix.  Weights do not enter.

The compressed path first maps every factor into its own column space with
an orthonormal basis ``Q_k`` (``R x R`` coefficients), which shrinks the
rows from ``prod I_k`` to ``R^N``.  Tangent directions that leave the
column space of a factor are orthogonal to everything else; their block
reduces to the Khatri-Rao product of the remaining coefficient matrices,
so its smallest singular value is taken separately.
"""
from __future__ import annotations

import math

import numpy as np

from .linalg import column_space_basis, orthonormal_complement
from .model import KruskalModel, normalize_model

#: Smallest singular values below this count as zero (unbounded condition).
SIGMA_FLOOR = 1e-14
#: Largest dense Terracini matrix (entries) the direct path will build.
MAX_DIRECT_ENTRIES = 50_000_000
#: Largest tensor (entries) the direct path accepts.
MAX_DIRECT_ROWS = 1_000_000


def _require_unit(m: KruskalModel):
    if len(m.factors) < 3:
        raise ValueError("the Terracini condition number needs order >= 3")
    for n, F in enumerate(m.factors):
        if np.max(np.abs(np.linalg.norm(F, axis=0) - 1.0)) > 1e-10:
            raise ValueError(f"factor {n} does not have unit-norm columns; normalize the model first")


def _kron_all(vs):
    # descending mode order matches first-index-fastest vectorization
    out = vs[-1]
    for v in reversed(vs[:-1]):
        out = np.kron(out, v)
    return out


def _component_blocks(cols):
    """Rank-1 column and per-mode tangent blocks for one component."""
    N = len(cols)
    blocks = [_kron_all([c[:, None] for c in cols])]
    for n in range(N):
        mats = [c[:, None] for c in cols]
        mats[n] = orthonormal_complement(cols[n])
        blocks.append(_kron_all(mats))
    return blocks


def _assemble(factors) -> np.ndarray:
    R = factors[0].shape[1]
    blocks = []
    for r in range(R):
        blocks.extend(_component_blocks([F[:, r] for F in factors]))
    return np.hstack(blocks)


def terracini_matrix(m: KruskalModel) -> np.ndarray:
    """Dense Terracini matrix of a normalized model.

    Shape ``prod(I_k) x (sum(I_k - 1) + 1) * R``; every column has unit norm.
    """
    _require_unit(m)
    return _assemble(m.factors)


def _sigma_min(M: np.ndarray) -> float:
    if M.shape[1] > M.shape[0]:
        return 0.0
    return float(np.linalg.svd(M, compute_uv=False)[-1])


def _kappa(sigma: float) -> float:
    return math.inf if sigma < SIGMA_FLOOR else 1.0 / sigma


def condition_number_direct(m: KruskalModel) -> float:
    """``1 / sigma_min`` of the dense Terracini matrix (``inf`` when singular)."""
    _require_unit(m)
    rows = int(np.prod(m.shape, dtype=np.int64))
    cols = (sum(s - 1 for s in m.shape) + 1) * m.rank
    if rows > MAX_DIRECT_ROWS or rows * cols > MAX_DIRECT_ENTRIES:
        raise ValueError(
            f"Terracini matrix {rows}x{cols} exceeds the direct-path size cap; "
            "use condition_number_compressed"
        )
    if cols > rows:
        return math.inf
    return _kappa(_sigma_min(terracini_matrix(m)))


def condition_number_compressed(m: KruskalModel) -> float:
    """Condition number from ``R^N``-row blocks; needs ``R <= I_k`` for all k.

    Raises
    ------
    ValueError
        If a mode is shorter than the rank.
    numpy.linalg.LinAlgError
        If a factor is rank deficient.
    """
    _require_unit(m)
    R = m.rank
    if any(s < R for s in m.shape):
        raise ValueError("compressed condition number needs rank <= every mode length")
    coeffs = []
    for F in m.factors:
        Q = column_space_basis(F)
        B = Q.T @ F
        coeffs.append(B / np.linalg.norm(B, axis=0))
    sigma = _sigma_min(_assemble(coeffs))
    for n, s in enumerate(m.shape):
        if s > R:
            others = [coeffs[k] for k in range(len(coeffs)) if k != n]
            tail = others[-1]
            for B in reversed(others[:-1]):
                tail = (tail[:, None, :] * B[None, :, :]).reshape(-1, R)
            sigma = min(sigma, _sigma_min(tail))
    return _kappa(sigma)


def condition_number(m: KruskalModel) -> float:
    """Condition number of any model; normalizes first and picks a path.

    The compressed path is used when the rank does not exceed any mode
    length and every factor has full column rank; otherwise the direct path.
    """
    nm = normalize_model(m)
    if np.any(nm.weights == 0):
        return math.inf
    if all(s >= nm.rank for s in nm.shape):
        try:
            return condition_number_compressed(nm)
        except np.linalg.LinAlgError:
            return math.inf
    return condition_number_direct(nm)
