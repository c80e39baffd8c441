"""Seeded multi-trial experiment recipes.

Each recipe returns ``(rows, columns, meta)`` ready for
:func:`cpdkit.io.write_csv`.  Defaults are desk-scale; ``meta`` records the
parameters actually used.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Optional, Sequence

import numpy as np

from .conditioning import condition_number
from .diagnostics import InsufficientSamplesError, pooled_order, theoretical_rate
from .generators import add_gaussian_noise, collinear_cp, perturb_model, planted_orthogonal_cp, random_cp
from .io import threads_from_env
from .model import KruskalModel, aligned_factor_errors, factor_recovery_error
from .solvers import SolverConfig, SolverState, ThresholdSchedule, amdm_update, initial_model, run

RECIPES = ("exact-rate", "large-rank", "planted-probability", "noisy-collinear", "condition-trace")

#: Desk-scale ``(mode length, rank)`` per order for the rate recipe.
RATE_DEFAULTS = {2: (30, 5), 3: (30, 8), 4: (12, 5), 5: (7, 3)}


def parallel_map(fn: Callable, items: Sequence, threads: Optional[int] = None) -> list:
    """Ordered map, concurrent up to ``threads`` (``CPDKIT_THREADS`` by default)."""
    threads = threads_from_env() if threads is None else threads
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# building blocks shared with the tests
# ---------------------------------------------------------------------------

def subiteration_errors(shape, rank: int, seed: int, max_sweeps: int = 30) -> list[float]:
    """AMDM factor error after every subsweep on an exact-rank random tensor.

    The error of a subsweep is the aligned error of the factor it updated.
    The tensor uses ``seed``; the initial guess an independent stream.
    """
    return subiteration_histories(shape, rank, seed, max_sweeps)[0]


def subiteration_histories(shape, rank: int, seed: int, max_sweeps: int = 30):
    """Per-subsweep ``(factor errors, relative residuals)`` of one AMDM run."""
    X, truth = random_cp(shape, rank, seed)
    errors: list[float] = []

    def record(state: SolverState, sweep: int, n: int):
        errs, _ = aligned_factor_errors(state.model(), truth)
        errors.append(float(errs[n]))

    cfg = SolverConfig(rank=rank, algorithm="amdm", max_sweeps=max_sweeps, seed=None)
    init_rng = np.random.default_rng([seed, 1])
    res = run(X, cfg, init=initial_model(X.shape, rank, init_rng), callback=record)
    residuals = [r.residual / res.tensor_norm for r in res.trace if r.mode != 0]
    return errors, residuals


def _pooled_alpha(seqs):
    try:
        est = pooled_order(seqs)
        return est.alpha, est.pairs
    except InsufficientSamplesError:
        return math.nan, 0


def contraction_error(shape, rank: int, eps: float, seed: int, n: int = 0) -> float:
    """Factor error after one AMDM update of mode ``n``.

    Every other factor of the exact model is perturbed by ``||Delta||_F = eps``
    before the update.
    """
    X, truth = random_cp(shape, rank, seed)
    perturbed = perturb_model(truth, eps, seed=[seed, 2])
    factors = [F.copy() for F in perturbed.factors]
    factors[n] = truth.factors[n].copy()
    state = SolverState.from_model(KruskalModel(truth.weights, factors), rng=seed)
    state = amdm_update(state, X, n)
    errs, _ = aligned_factor_errors(state.model(), truth)
    return float(errs[n])


def contraction_slope(order: int, s: int, rank: int, eps_values=(1e-2, 1e-3, 1e-4), seeds=range(5)) -> float:
    """Log-log slope of post-update error against input perturbation.

    Errors are averaged (geometrically) over ``seeds``.
    """
    shape = (s,) * order
    logs = []
    for eps in eps_values:
        logs.append(np.mean([math.log(contraction_error(shape, rank, eps, sd)) for sd in seeds]))
    return float(np.polyfit(np.log(eps_values), logs, 1)[0])


# ---------------------------------------------------------------------------
# recipes
# ---------------------------------------------------------------------------

def exact_rate(order: int = 3, s: Optional[int] = None, rank: Optional[int] = None,
               trials: int = 50, max_sweeps: int = 30, seed: int = 0):
    """Empirical AMDM order pooled over ``trials`` exact-rank tensors.

    ``alpha_hat`` is fitted to factor errors against the known truth;
    ``alpha_hat_residual`` to relative residuals of the same runs.
    """
    ds, dr = RATE_DEFAULTS.get(order, (6, 3))
    s = ds if s is None else s
    rank = dr if rank is None else rank
    shape = (s,) * order
    hist = parallel_map(lambda k: subiteration_histories(shape, rank, seed + k, max_sweeps), list(range(trials)))
    theory = theoretical_rate(order)
    alpha, pairs = _pooled_alpha([h[0] for h in hist])
    alpha_res, _ = _pooled_alpha([h[1] for h in hist])
    row = {
        "order": order, "dims": "x".join(map(str, shape)), "rank": rank, "trials": trials,
        "alpha_hat": alpha, "alpha_theory": theory, "rel_error": abs(alpha - theory) / theory,
        "pairs": pairs, "alpha_hat_residual": alpha_res,
    }
    cols = ["order", "dims", "rank", "trials", "alpha_hat", "alpha_theory", "rel_error", "pairs",
            "alpha_hat_residual"]
    meta = {"recipe": "exact-rate", "max_sweeps": max_sweeps, "seed": seed, "window": "(1e-12, 1e-2)"}
    return [row], cols, meta


def _sweep_rows(label, res, extra=None):
    rows = []
    for r in res.trace:
        row = {"algorithm": label, "sweep": r.sweep, "residual": r.residual,
               "rel_residual": r.residual / res.tensor_norm, "fitness": r.fitness,
               "cond": r.cond, "threshold": r.threshold}
        row.update(extra or {})
        rows.append(row)
    return rows


def large_rank(s: int = 40, order: int = 3, rank: int = 80, schedule: str = "reltol:100",
               max_sweeps: int = 40, seed: int = 0):
    """General-AMDM against ALS when the rank exceeds the mode lengths."""
    X, _ = random_cp((s,) * order, rank, seed)
    init_seed = seed + 1
    out = []
    for label, alg, sched in [("general", "general", ThresholdSchedule.parse(schedule)), ("als", "als", None)]:
        cfg = SolverConfig(rank=rank, algorithm=alg, schedule=sched, max_sweeps=max_sweeps,
                           tol_change=0.0, tol_resid=0.0, seed=init_seed, granularity="sweep")
        out.extend(_sweep_rows(label, run(X, cfg)))
    cols = ["algorithm", "sweep", "residual", "rel_residual", "fitness", "cond", "threshold"]
    meta = {"recipe": "large-rank", "dims": f"{s}^{order}", "rank": rank, "schedule": schedule, "seed": seed}
    return out, cols, meta


def planted_trial(shape, rank_exact: int, eps_perp: float, eps: float, guesses: int,
                  seed: int, max_sweeps: int = 100, threshold: float = 1e-9) -> float:
    """Best recovery error of the planted half over ``guesses`` perturbed starts."""
    X, planted = planted_orthogonal_cp(shape, rank_exact, eps_perp, seed)
    # residual changes are second order near a stationary point of an
    # approximate fit, so only the factor-change test stops these runs
    cfg = SolverConfig(rank=planted.rank, algorithm="amdm", max_sweeps=max_sweeps,
                       tol_change=1e-13, tol_resid=0.0)
    best = math.inf
    for g in range(guesses):
        init = perturb_model(planted, eps, seed=[seed, g, 7])
        res = run(X, cfg, init=init)
        best = min(best, factor_recovery_error(res.model, planted))
        if best < threshold:
            break
    return best


def planted_probability(s: int = 10, order: int = 3, rank_exact: int = 10, rank: int = 5,
                        trials: int = 20, guesses: int = 5, eps: float = 1e-3,
                        eps_perp: Sequence[float] = (1e-6, 1e-5, 1e-4, 1e-1),
                        max_sweeps: int = 100, seed: int = 0, threshold: float = 1e-9):
    """Fraction of planted tensors whose planted half is recovered."""
    if 2 * rank != rank_exact:
        raise ValueError("the planted half has rank rank_exact / 2")
    shape = (s,) * order
    rows = []
    for ep in eps_perp:
        errs = parallel_map(
            lambda k: planted_trial(shape, rank_exact, ep, eps, guesses, seed + k, max_sweeps, threshold),
            list(range(trials)),
        )
        hits = sum(e < threshold for e in errs)
        rows.append({"eps_perp": ep, "trials": trials, "converged": hits,
                     "probability": hits / trials, "median_error": float(np.median(errs))})
    cols = ["eps_perp", "trials", "converged", "probability", "median_error"]
    meta = {"recipe": "planted-probability", "dims": f"{s}^{order}", "rank_exact": rank_exact,
            "rank": rank, "guesses": guesses, "eps": eps, "threshold": threshold,
            "eps_perp_convention": "Frobenius norm per factor", "seed": seed}
    return rows, cols, meta


def noisy_collinear(s: int = 40, order: int = 3, rank: int = 10, collinearity: float = 0.9,
                    sigma: float = 1e-3, max_sweeps: int = 200, schedule: str = "decay:10:10",
                    seed: int = 0, track_condition: bool = True):
    """Per-sweep fitness and condition number of ALS, AMDM and the hybrid."""
    X, _ = collinear_cp((s,) * order, rank, collinearity, seed)
    X = add_gaussian_noise(X, sigma, [seed, 1])
    rows = []
    for label, alg, sched in [("als", "als", None), ("amdm", "amdm", None),
                              ("hybrid", "general", ThresholdSchedule.parse(schedule))]:
        cfg = SolverConfig(rank=rank, algorithm=alg, schedule=sched, max_sweeps=max_sweeps,
                           seed=seed + 100, granularity="sweep", track_condition=track_condition)
        rows.extend(_sweep_rows(label, run(X, cfg)))
    cols = ["algorithm", "sweep", "residual", "rel_residual", "fitness", "cond", "threshold"]
    meta = {"recipe": "noisy-collinear", "dims": f"{s}^{order}", "rank": rank,
            "collinearity": collinearity, "sigma": sigma, "schedule": schedule, "seed": seed}
    return rows, cols, meta


def condition_trace(s: int = 30, order: int = 3, rank: int = 10, collinearity: float = 0.9,
                    max_sweeps: int = 50, seed: int = 0):
    """Condition number along ALS and AMDM runs on an exact collinear tensor."""
    X, truth = collinear_cp((s,) * order, rank, collinearity, seed)
    rows = []
    for alg in ("als", "amdm"):
        cfg = SolverConfig(rank=rank, algorithm=alg, max_sweeps=max_sweeps, seed=seed + 100,
                           granularity="sweep", track_condition=True)
        rows.extend(_sweep_rows(alg, run(X, cfg)))
    cols = ["algorithm", "sweep", "residual", "rel_residual", "fitness", "cond", "threshold"]
    meta = {"recipe": "condition-trace", "dims": f"{s}^{order}", "rank": rank,
            "collinearity": collinearity, "true_cond": condition_number(truth), "seed": seed}
    return rows, cols, meta


def run_recipe(name: str, **kwargs):
    table = {
        "exact-rate": exact_rate,
        "large-rank": large_rank,
        "planted-probability": planted_probability,
        "noisy-collinear": noisy_collinear,
        "condition-trace": condition_trace,
    }
    if name not in table:
        raise ValueError(f"unknown recipe {name!r}; choose from {', '.join(RECIPES)}")
    return table[name](**kwargs)
