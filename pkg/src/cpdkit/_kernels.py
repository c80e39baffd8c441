"""Dense MTTKRP and CP reconstruction kernels.

Two interchangeable backends live here: numba ``@njit`` loops that make a
single pass over the tensor, and pure-numpy contractions built from
``matmul``/``einsum``.  Neither one forms the full Khatri-Rao product.

The backend is picked once at import time.  Set ``CPDKIT_DISABLE_NUMBA=1``
(or run without numba installed) to force the numpy path.

With numba active, only MTTKRP along modes other than the first goes
through the compiled loop.  Along mode 0, and for reconstruction, the
numpy path is a single BLAS matrix product and measured faster (see
``benchmarks/bench_kernels.py``), so both backends share it there.
"""
from __future__ import annotations

import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

_FLAG = os.environ.get("CPDKIT_DISABLE_NUMBA", "").strip().lower()
NUMBA_AVAILABLE = numba is not None
USE_NUMBA = NUMBA_AVAILABLE and _FLAG not in {"1", "true", "yes", "on"}
BACKEND = "numba" if USE_NUMBA else "numpy"


def _pack(factors):
    """Stack factor rows into one C-contiguous block plus row offsets."""
    sizes = np.array([f.shape[0] for f in factors], dtype=np.int64)
    offsets = np.zeros(len(factors), dtype=np.int64)
    offsets[1:] = np.cumsum(sizes)[:-1]
    fcat = np.ascontiguousarray(np.vstack(factors), dtype=np.float64)
    return fcat, offsets, sizes


# ---------------------------------------------------------------------------
# numpy backend
# ---------------------------------------------------------------------------

def mttkrp_numpy(X, factors, n):
    N = X.ndim
    R = factors[0].shape[1]
    if N == 1:
        return np.repeat(X[:, None], R, axis=1).astype(np.float64)
    Y = np.moveaxis(X, n, 0)
    others = [m for m in range(N) if m != n]
    # matmul contracts the trailing mode through BLAS; the rest keep r shared
    Y = Y @ factors[others[-1]]
    for m in reversed(others[:-1]):
        Y = np.einsum("...ir,ir->...r", Y, factors[m])
    return np.ascontiguousarray(Y)


def reconstruct_numpy(weights, factors):
    shape = tuple(f.shape[0] for f in factors)
    head = factors[0] * weights
    if len(factors) == 1:
        return head.sum(axis=1)
    tail = factors[-1]
    for f in reversed(factors[1:-1]):
        tail = (tail[:, None, :] * f[None, :, :]).reshape(-1, f.shape[1])
    return (head @ tail.T).reshape(shape, order="F")


# ---------------------------------------------------------------------------
# numba backend
# ---------------------------------------------------------------------------

if NUMBA_AVAILABLE:

    @numba.njit(cache=True, nogil=True)
    def _mttkrp_loop(data, shape, fcat, offsets, n):
        N = shape.shape[0]
        R = fcat.shape[1]
        I0 = shape[0]
        out = np.zeros((shape[n], R))
        nfib = 1
        for m in range(1, N):
            nfib *= shape[m]
        idx = np.zeros(N, np.int64)
        w = np.empty(R)
        s = np.empty(R)
        off0 = offsets[0]
        for f in range(nfib):
            for r in range(R):
                w[r] = 1.0
            for m in range(1, N):
                if m != n:
                    row = offsets[m] + idx[m]
                    for r in range(R):
                        w[r] *= fcat[row, r]
            base = f * I0
            if n == 0:
                for i in range(I0):
                    x = data[base + i]
                    for r in range(R):
                        out[i, r] += x * w[r]
            else:
                for r in range(R):
                    s[r] = 0.0
                for i in range(I0):
                    x = data[base + i]
                    row = off0 + i
                    for r in range(R):
                        s[r] += x * fcat[row, r]
                o = idx[n]
                for r in range(R):
                    out[o, r] += s[r] * w[r]
            # advance the mode-1..N-1 counter, mode 1 fastest
            m = 1
            while m < N:
                idx[m] += 1
                if idx[m] < shape[m]:
                    break
                idx[m] = 0
                m += 1
        return out

    @numba.njit(cache=True, nogil=True)
    def _reconstruct_loop(weights, fcat, offsets, shape):
        N = shape.shape[0]
        R = fcat.shape[1]
        I0 = shape[0]
        nfib = 1
        for m in range(1, N):
            nfib *= shape[m]
        out = np.empty(nfib * I0)
        idx = np.zeros(N, np.int64)
        w = np.empty(R)
        off0 = offsets[0]
        for f in range(nfib):
            for r in range(R):
                w[r] = weights[r]
            for m in range(1, N):
                row = offsets[m] + idx[m]
                for r in range(R):
                    w[r] *= fcat[row, r]
            base = f * I0
            for i in range(I0):
                row = off0 + i
                acc = 0.0
                for r in range(R):
                    acc += fcat[row, r] * w[r]
                out[base + i] = acc
            m = 1
            while m < N:
                idx[m] += 1
                if idx[m] < shape[m]:
                    break
                idx[m] = 0
                m += 1
        return out

    def mttkrp_numba(X, factors, n):
        fcat, offsets, sizes = _pack(factors)
        data = np.ravel(X, order="F").astype(np.float64, copy=False)
        return _mttkrp_loop(data, sizes, fcat, offsets, n)

    def reconstruct_numba(weights, factors):
        fcat, offsets, sizes = _pack(factors)
        w = np.ascontiguousarray(weights, dtype=np.float64)
        flat = _reconstruct_loop(w, fcat, offsets, sizes)
        return flat.reshape(tuple(sizes), order="F")

else:  # pragma: no cover

    def mttkrp_numba(X, factors, n):
        raise RuntimeError("numba is not installed")

    def reconstruct_numba(weights, factors):
        raise RuntimeError("numba is not installed")


def mttkrp_mixed(X, factors, n):
    if n == 0 or X.ndim == 1:
        return mttkrp_numpy(X, factors, n)
    return mttkrp_numba(X, factors, n)


mttkrp_kernel = mttkrp_mixed if USE_NUMBA else mttkrp_numpy
reconstruct_kernel = reconstruct_numpy
