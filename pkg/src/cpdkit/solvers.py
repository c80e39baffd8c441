"""Alternating CP solvers: ALS, AMDM and thresholded (general) AMDM.

All three share one sweep driver, :func:`run`.  The solver state keeps
unit-norm factors, an explicit weight vector and the thin SVD of every
factor, which the thresholded update reads its spectra from.

Update rules for mode ``n`` (``X_(n)`` is the mode-``n`` unfolding and
products run over the other modes ``m``):

* ALS:      ``A_n (*_m A_m^T A_m) = X_(n) KR(A_m)``
* AMDM:     ``A_n = X_(n) KR(pinv(A_m)^T)``
* general:  ``A_n (*_m Z_m) = X_(n) KR(L_m)`` where ``L_m`` and ``Z_m``
  invert the leading ``t`` singular values of ``A_m`` and keep the rest.
  ``t = 0`` gives ALS; ``t = R <= I_m`` gives AMDM.
"""
from __future__ import annotations

import logging
import math
import time
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .linalg import PINV_RTOL, ThinSVD, normalize_columns, pseudoinverse, solve_gram_system, thin_svd
from .model import KruskalModel, normalize_model, reconstruct
from .tensor import as_tensor, mttkrp, norm

log = logging.getLogger(__name__)

ALGORITHMS = ("als", "amdm", "general")
_ALIASES = {"hybrid": "general", "general-amdm": "general"}


class SolverError(RuntimeError):
    """An update failed; the message names the mode and sweep."""


class NonFiniteError(SolverError):
    pass


# ---------------------------------------------------------------------------
# threshold schedules
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ThresholdSchedule:
    """How many leading singular values of each companion factor to invert.

    ``fixed``
        constant ``t``.
    ``decay``
        ``max(t - sweep // period, 0)``: one fewer inverted value every
        ``period`` sweeps.
    ``relative``
        per mode, the number of singular values with ``s_max / s_i < tau``.

    Every variant is clamped to ``[0, min(I_n, R)]`` per mode.
    """

    kind: str
    t: int = 0
    period: int = 1
    tau: float = 100.0

    def __post_init__(self):
        if self.kind not in ("fixed", "decay", "relative"):
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if self.t < 0:
            raise ValueError("threshold t must be >= 0")
        if self.kind == "decay" and self.period < 1:
            raise ValueError("decay period must be >= 1")
        if self.kind == "relative" and not self.tau > 1:
            raise ValueError("relative tolerance tau must exceed 1")

    @classmethod
    def fixed(cls, t: int) -> "ThresholdSchedule":
        return cls("fixed", t=int(t))

    @classmethod
    def decay(cls, t0: int, period: int) -> "ThresholdSchedule":
        return cls("decay", t=int(t0), period=int(period))

    @classmethod
    def relative(cls, tau: float) -> "ThresholdSchedule":
        return cls("relative", tau=float(tau))

    @classmethod
    def parse(cls, text: str) -> "ThresholdSchedule":
        """Parse ``fixed:T``, ``decay:T0:PERIOD`` or ``reltol:TAU``."""
        parts = text.strip().split(":")
        try:
            if parts[0] == "fixed" and len(parts) == 2:
                return cls.fixed(int(parts[1]))
            if parts[0] == "decay" and len(parts) == 3:
                return cls.decay(int(parts[1]), int(parts[2]))
            if parts[0] in ("reltol", "relative") and len(parts) == 2:
                return cls.relative(float(parts[1]))
        except ValueError as exc:
            raise ValueError(f"bad schedule {text!r}: {exc}") from None
        raise ValueError(f"bad schedule {text!r}; expected fixed:T, decay:T0:K or reltol:TAU")

    def __str__(self) -> str:
        if self.kind == "fixed":
            return f"fixed:{self.t}"
        if self.kind == "decay":
            return f"decay:{self.t}:{self.period}"
        return f"reltol:{self.tau:g}"


def evaluate_schedule(sched: ThresholdSchedule, sweep: int, spectra: Sequence[ThinSVD]) -> list[int]:
    """Thresholds for every mode at 0-based ``sweep`` (completed sweeps)."""
    out = []
    for U, s, V in spectra:
        cap = min(U.shape[0], V.shape[0])
        if sched.kind == "fixed":
            t = sched.t
        elif sched.kind == "decay":
            t = max(sched.t - sweep // sched.period, 0)
        else:
            smax = s[0] if s.size else 0.0
            with np.errstate(divide="ignore"):
                t = int(np.count_nonzero((s > 0) & (smax / np.where(s > 0, s, 1.0) < sched.tau)))
        out.append(int(min(max(t, 0), cap)))
    return out


def pseudo_spectrum(s, t: int) -> np.ndarray:
    """Invert the first ``t`` singular values, keep the others.

    Values at or below ``1e-12 * s_max`` map to zero instead of blowing up.
    """
    s = np.asarray(s, dtype=np.float64)
    if not 0 <= t <= s.shape[0]:
        raise ValueError(f"threshold {t} outside [0, {s.shape[0]}]")
    out = s.copy()
    if t and s[0] > 0:
        head = s[:t]
        keep = head > PINV_RTOL * s[0]
        out[:t] = np.where(keep, 1.0 / np.where(keep, head, 1.0), 0.0)
    elif t:
        out[:t] = 0.0
    return out


# ---------------------------------------------------------------------------
# configuration and state
# ---------------------------------------------------------------------------

@dataclass
class SolverConfig:
    """Options for :func:`run`.

    ``schedule`` only matters for ``algorithm="general"``; it defaults to
    ``fixed(rank)``.  ``granularity`` picks one trace row per subsweep or
    per sweep.
    """

    rank: int
    algorithm: str = "amdm"
    max_sweeps: int = 100
    tol_change: float = 1e-10
    tol_resid: float = 1e-12
    schedule: Optional[ThresholdSchedule] = None
    pinv_rtol: float = PINV_RTOL
    seed: Optional[int] = 0
    granularity: str = "subsweep"
    track_condition: bool = False

    def __post_init__(self):
        self.algorithm = _ALIASES.get(self.algorithm, self.algorithm)
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if self.rank < 1:
            raise ValueError("rank must be >= 1")
        if self.max_sweeps < 1:
            raise ValueError("max_sweeps must be >= 1")
        if self.tol_change < 0 or self.tol_resid < 0 or self.pinv_rtol < 0:
            raise ValueError("tolerances must be >= 0")
        if self.granularity not in ("sweep", "subsweep"):
            raise ValueError("granularity must be 'sweep' or 'subsweep'")
        if self.schedule is not None and self.schedule.kind == "fixed" and self.schedule.t > self.rank:
            raise ValueError("a fixed threshold cannot exceed the rank")

    def effective_schedule(self) -> ThresholdSchedule:
        if self.algorithm == "als":
            return ThresholdSchedule.fixed(0)
        if self.algorithm == "amdm" or self.schedule is None:
            return ThresholdSchedule.fixed(self.rank)
        return self.schedule


@dataclass
class SolverState:
    """Unit-norm factors, weights and per-factor thin SVDs."""

    factors: list[np.ndarray]
    weights: np.ndarray
    spectra: list[ThinSVD]
    sweep: int = 0
    rng: np.random.Generator = field(default_factory=np.random.default_rng, repr=False)
    notes: tuple[str, ...] = ()

    @classmethod
    def from_model(cls, m: KruskalModel, rng=None) -> "SolverState":
        nm = normalize_model(m)
        return cls(
            factors=[F.copy() for F in nm.factors],
            weights=nm.weights.copy(),
            spectra=[thin_svd(F) for F in nm.factors],
            rng=np.random.default_rng(rng),
        )

    @property
    def rank(self) -> int:
        return self.weights.shape[0]

    def model(self) -> KruskalModel:
        return KruskalModel(self.weights.copy(), [F.copy() for F in self.factors], normalized=True)


def _finish(state: SolverState, n: int, A: np.ndarray, notes=()) -> SolverState:
    if not np.all(np.isfinite(A)):
        raise NonFiniteError(f"non-finite factor in mode {n} at sweep {state.sweep}")
    An, norms = normalize_columns(A)
    notes = list(notes)
    dead = norms == 0
    if np.any(dead):
        fresh = state.rng.uniform(0.0, 1.0, size=(An.shape[0], int(dead.sum())))
        An[:, dead] = fresh / np.linalg.norm(fresh, axis=0)
        notes.append(f"reinitialized columns {np.flatnonzero(dead).tolist()} of mode {n}")
    factors = list(state.factors)
    factors[n] = An
    spectra = list(state.spectra)
    spectra[n] = thin_svd(An)
    return replace(state, factors=factors, weights=norms, spectra=spectra, notes=tuple(notes))


def _finite_or_raise(M: np.ndarray, state: SolverState, n: int, what: str) -> np.ndarray:
    if not np.all(np.isfinite(M)):
        raise NonFiniteError(f"non-finite {what} in mode {n} at sweep {state.sweep}")
    return M


def _rhs(X, L, n, state):
    with np.errstate(invalid="ignore", over="ignore"):
        M = mttkrp(X, L, n)
    return _finite_or_raise(M, state, n, "MTTKRP result")


def _check_mode(state, X, n):
    if X.ndim != len(state.factors):
        raise ValueError("tensor order does not match the state")
    if not 0 <= n < X.ndim:
        raise IndexError(f"mode {n} out of range")


# ---------------------------------------------------------------------------
# updates
# ---------------------------------------------------------------------------

def als_update(state: SolverState, X, n: int) -> SolverState:
    """Least-squares update of mode ``n`` through the normal equations."""
    X = as_tensor(X)
    _check_mode(state, X, n)
    R = state.rank
    gamma = np.ones((R, R))
    for m, F in enumerate(state.factors):
        if m != n:
            gamma *= F.T @ F
    rhs = _rhs(X, state.factors, n, state)
    return _finish(state, n, solve_gram_system(_finite_or_raise(gamma, state, n, "Gram matrix"), rhs))


def amdm_update(state: SolverState, X, n: int, rel_tol: float = PINV_RTOL) -> SolverState:
    """Mode-``n`` update ``A_n = X_(n) KR(pinv(A_m)^T)``; needs ``R <= I_m``."""
    X = as_tensor(X)
    _check_mode(state, X, n)
    notes = []
    L = []
    for m, F in enumerate(state.factors):
        if m == n:
            L.append(F)
            continue
        if F.shape[0] < state.rank:
            raise ValueError(
                f"AMDM needs rank <= every mode length; mode {m} has {F.shape[0]} < {state.rank}"
            )
        s = state.spectra[m].s
        if s[-1] <= rel_tol * s[0]:
            notes.append(f"pseudoinverse truncated for mode {m}")
        L.append(pseudoinverse(F, rel_tol, svd=state.spectra[m]).T)
    return _finish(state, n, _rhs(X, L, n, state), notes)


def _companion_terms(F: np.ndarray, svd: ThinSVD, t: int):
    """``(L_m, Z_m)`` for companion factor ``F`` with threshold ``t``.

    Written as ALS terms plus a correction on the inverted singular
    triplets, so ``t = 0`` reproduces the ALS quantities exactly.
    """
    if t == 0:
        return F, F.T @ F
    U, s, V = svd
    ps = pseudo_spectrum(s, t)
    dl = (ps - s)[:t]
    dz = (ps * s - s * s)[:t]
    L = F + (U[:, :t] * dl) @ V[:, :t].T
    Z = F.T @ F + (V[:, :t] * dz) @ V[:, :t].T
    return L, Z


def general_amdm_update(state: SolverState, X, n: int, t) -> SolverState:
    """Thresholded AMDM update of mode ``n``.

    ``t`` is one threshold for every companion mode or a per-mode sequence.
    The Gram-Hadamard system is symmetric semidefinite for ranks above the
    mode lengths and goes through :func:`solve_gram_system`.
    """
    X = as_tensor(X)
    _check_mode(state, X, n)
    N = X.ndim
    ts = [int(t)] * N if np.isscalar(t) else [int(v) for v in t]
    if len(ts) != N:
        raise ValueError(f"expected {N} thresholds, got {len(ts)}")
    R = state.rank
    Z = np.ones((R, R))
    L = []
    for m, F in enumerate(state.factors):
        if m == n:
            L.append(F)
            continue
        tm = min(max(ts[m], 0), state.spectra[m].s.shape[0])
        Lm, Zm = _companion_terms(F, state.spectra[m], tm)
        L.append(Lm)
        Z *= Zm
    rhs = _rhs(X, L, n, state)
    return _finish(state, n, solve_gram_system(_finite_or_raise(Z, state, n, "Gram matrix"), rhs))


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------

@dataclass
class TraceRecord:
    """One diagnostics row.

    ``mode`` is 1-based for subsweep rows and 0 for per-sweep rows; ``sweep``
    is 1-based.  ``threshold`` is the companion threshold of the updated
    mode (subsweep rows) or the largest one in the sweep (sweep rows).
    """

    sweep: int
    mode: int
    residual: float
    fitness: float
    cond: Optional[float]
    delta: float
    threshold: int
    seconds: float
    thresholds: tuple[int, ...] = ()
    notes: tuple[str, ...] = ()


@dataclass
class CPResult:
    model: KruskalModel
    trace: list[TraceRecord]
    converged: bool
    status: str
    sweeps: int
    tensor_norm: float

    def __iter__(self):
        # allows ``model, trace = run(...)``
        yield self.model
        yield self.trace


def initial_model(shape: Sequence[int], rank: int, rng) -> KruskalModel:
    """Uniform(0, 1) random factors."""
    rng = np.random.default_rng(rng)
    return KruskalModel(np.ones(rank), [rng.uniform(0.0, 1.0, size=(s, rank)) for s in shape])


def _condition(model: KruskalModel) -> float:
    from .conditioning import condition_number

    try:
        return condition_number(model)
    except (ValueError, np.linalg.LinAlgError):
        return math.nan


def run(
    X,
    cfg: SolverConfig,
    init: Optional[KruskalModel] = None,
    callback: Optional[Callable[[SolverState, int, int], None]] = None,
) -> CPResult:
    """Run the configured alternating solver on tensor ``X``.

    Stops after ``cfg.max_sweeps`` sweeps or, once a full sweep has been
    done, as soon as the largest relative factor change over the last
    ``N`` subsweeps drops below ``tol_change`` or the residual change of
    one subsweep drops below ``tol_resid * ||X||``.  A non-finite update
    ends the run early and returns the lowest-residual model seen.

    ``callback(state, sweep, mode)`` fires after every subsweep (0-based
    arguments).
    """
    X = as_tensor(X)
    N = X.ndim
    xnorm = norm(X)
    if xnorm == 0:
        raise ValueError("cannot decompose an all-zero tensor")
    rng = np.random.default_rng(cfg.seed)
    if init is None:
        init = initial_model(X.shape, cfg.rank, rng)
    elif init.shape != X.shape or init.rank != cfg.rank:
        raise ValueError(
            f"initial model {init.shape}/rank {init.rank} incompatible with "
            f"tensor {X.shape}/rank {cfg.rank}"
        )
    if cfg.algorithm == "amdm" and cfg.rank > min(X.shape):
        raise ValueError("AMDM needs rank <= every mode length; use algorithm='general'")
    state = SolverState.from_model(init, rng)
    sched = cfg.effective_schedule()

    def resid_of(st):
        return norm(X - reconstruct(KruskalModel(st.weights, st.factors)))

    start = time.perf_counter()
    trace: list[TraceRecord] = []
    resid = resid_of(state)
    best = (resid, state)
    window: deque[float] = deque(maxlen=N)
    converged = False
    status = "max_sweeps"
    sweeps_done = 0

    for sweep in range(cfg.max_sweeps):
        state = replace(state, sweep=sweep)
        ts = evaluate_schedule(sched, sweep, state.spectra)
        sweep_delta = 0.0
        sweep_notes: list[str] = []
        aborted = False
        for n in range(N):
            old = state.factors[n]
            try:
                if cfg.algorithm == "als":
                    new = als_update(state, X, n)
                elif cfg.algorithm == "amdm":
                    new = amdm_update(state, X, n, cfg.pinv_rtol)
                else:
                    new = general_amdm_update(state, X, n, ts)
            except NonFiniteError as exc:
                log.warning("stopping early: %s", exc)
                status = "nonfinite"
                aborted = True
                break
            except Exception as exc:
                raise SolverError(f"update of mode {n} failed at sweep {sweep}: {exc}") from exc
            state = new
            delta = float(np.linalg.norm(state.factors[n] - old) / max(np.linalg.norm(old), 1e-300))
            new_resid = resid_of(state)
            if not math.isfinite(new_resid):
                status = "nonfinite"
                aborted = True
                break
            window.append(delta)
            sweep_delta = max(sweep_delta, delta)
            sweep_notes.extend(state.notes)
            if cfg.granularity == "subsweep":
                trace.append(TraceRecord(
                    sweep=sweep + 1, mode=n + 1, residual=new_resid,
                    fitness=1.0 - new_resid / xnorm,
                    cond=_condition(state.model()) if cfg.track_condition else None,
                    delta=delta, threshold=ts[n], seconds=time.perf_counter() - start,
                    thresholds=tuple(ts), notes=state.notes,
                ))
            if callback is not None:
                callback(state, sweep, n)
            if new_resid < best[0]:
                best = (new_resid, state)
            if sweep > 0 or n == N - 1:
                if max(window) < cfg.tol_change or abs(resid - new_resid) < cfg.tol_resid * xnorm:
                    converged = True
            resid = new_resid
            if converged:
                break
        if aborted:
            break
        sweeps_done = sweep + 1
        if cfg.granularity == "sweep":
            trace.append(TraceRecord(
                sweep=sweep + 1, mode=0, residual=resid, fitness=1.0 - resid / xnorm,
                cond=_condition(state.model()) if cfg.track_condition else None,
                delta=sweep_delta, threshold=max(ts), seconds=time.perf_counter() - start,
                thresholds=tuple(ts), notes=tuple(sweep_notes),
            ))
        if converged:
            status = "converged"
            break

    final = best[1] if status == "nonfinite" else state
    return CPResult(final.model(), trace, converged, status, sweeps_done, xnorm)
