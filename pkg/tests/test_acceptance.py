"""Acceptance suite: nine end-to-end checks at their stated tolerances.

Each test records one PASS/FAIL line (with the measured numbers) that the
terminal summary prints at the end of the run.  Set ``CPDKIT_FULL_SCALE=1``
to add the 100^3 convergence-order run.
"""
import math
import os
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cpdkit.conditioning import condition_number_compressed, condition_number_direct
from cpdkit.diagnostics import (
    orthonormality_defect,
    pooled_order,
    spectral_diagonalization_defect,
    stationarity_residual,
    theoretical_rate,
)
from cpdkit.experiments import (
    contraction_slope,
    exact_rate,
    large_rank,
    noisy_collinear,
    planted_probability,
    subiteration_errors,
)
from cpdkit.generators import collinear_cp, random_cp
from cpdkit.linalg import pseudoinverse
from cpdkit.model import residual_and_fitness
from cpdkit.solvers import (
    SolverConfig,
    SolverState,
    als_update,
    amdm_update,
    general_amdm_update,
    initial_model,
    run,
)
from cpdkit.tensor import khatri_rao, matricize, tensorize

RESULTS: list[str] = []


def verdict(label: str, checks: dict, detail: str) -> None:
    """Record one summary line, then fail with the offending checks."""
    failed = [name for name, ok in checks.items() if not ok]
    RESULTS.append(f"{'PASS' if not failed else 'FAIL'} [{label}] {detail}")
    assert not failed, f"{label}: failed {', '.join(failed)} ({detail})"


def last_sweep(rows, algorithm):
    return [r for r in rows if r["algorithm"] == algorithm][-1]


def test_exact_rank_superlinear():
    t0 = time.perf_counter()
    shape, R, budget = (30, 30, 30), 10, 10
    amdm_sweeps, als_final = [], []
    for seed in range(5):
        init = initial_model(shape, R, [seed, 1])
        X, _ = random_cp(shape, R, seed)
        cfg = SolverConfig(rank=R, algorithm="amdm", max_sweeps=budget, tol_change=0.0, tol_resid=0.0,
                           granularity="sweep")
        res = run(X, cfg, init=init)
        hit = [r.sweep for r in res.trace if r.residual / res.tensor_norm < 1e-10]
        amdm_sweeps.append(hit[0] if hit else math.inf)

        Xc, _ = collinear_cp(shape, R, 0.9, seed)
        cfg = SolverConfig(rank=R, algorithm="als", max_sweeps=budget, tol_change=0.0, tol_resid=0.0,
                           granularity="sweep")
        res = run(Xc, cfg, init=init)
        als_final.append(res.trace[-1].residual / res.tensor_norm)
    elapsed = time.perf_counter() - t0
    ok_seeds = sum(s <= budget for s in amdm_sweeps)
    verdict("1 exact-rank convergence",
            {"amdm": ok_seeds >= 4, "als": min(als_final) > 1e-10, "runtime": elapsed < 30},
            f"AMDM sweeps to 1e-10 {amdm_sweeps}; ALS collinear min rel residual {min(als_final):.2e}; "
            f"{elapsed:.1f}s")


def test_convergence_order():
    t0 = time.perf_counter()
    (row3,), _, _ = exact_rate(order=3, s=30, rank=8, trials=50)
    (row4,), _, _ = exact_rate(order=4, s=12, rank=5, trials=50)
    elapsed = time.perf_counter() - t0
    verdict("2 convergence order",
            {"N=3": row3["rel_error"] < 0.05, "N=4": row4["rel_error"] < 0.08, "runtime": elapsed < 120},
            f"N=3 alpha {row3['alpha_hat']:.4f} ({100 * row3['rel_error']:.1f}%), "
            f"N=4 alpha {row4['alpha_hat']:.4f} ({100 * row4['rel_error']:.1f}%); {elapsed:.1f}s")


@pytest.mark.slow
@pytest.mark.skipif(os.environ.get("CPDKIT_FULL_SCALE") != "1", reason="set CPDKIT_FULL_SCALE=1")
def test_convergence_order_large_scale():
    seqs = [subiteration_errors((100, 100, 100), 20, seed, max_sweeps=100) for seed in range(20)]
    est = pooled_order(seqs)
    rel = abs(est.alpha - theoretical_rate(3)) / theoretical_rate(3)
    verdict("2b convergence order 100^3", {"N=3": rel < 0.01},
            f"alpha {est.alpha:.4f} ({100 * rel:.2f}%)")


def test_rank_above_dimension():
    t0 = time.perf_counter()
    rows, _, _ = large_rank(s=40, rank=80, schedule="reltol:100", max_sweeps=40)
    elapsed = time.perf_counter() - t0
    gen, als = last_sweep(rows, "general"), last_sweep(rows, "als")
    verdict("3 rank above dimension",
            {"general": gen["rel_residual"] < 1e-8, "als": als["rel_residual"] > 1e-3, "runtime": elapsed < 120},
            f"general {gen['rel_residual']:.2e} vs ALS {als['rel_residual']:.2e} after {gen['sweep']} sweeps; "
            f"{elapsed:.1f}s")


def test_update_equivalences():
    worst_als = worst_amdm = 0.0
    for seed in range(20):
        g = np.random.default_rng(seed)
        shape = tuple(int(v) for v in g.integers(3, 9, size=int(g.integers(3, 5))))
        R = int(g.integers(1, min(shape) + 1))
        X = g.standard_normal(shape)
        state = SolverState.from_model(initial_model(shape, R, g), rng=seed)
        for n in range(len(shape)):
            worst_als = max(worst_als, np.max(np.abs(
                general_amdm_update(state, X, n, 0).factors[n] - als_update(state, X, n).factors[n])))
            worst_amdm = max(worst_amdm, np.max(np.abs(
                general_amdm_update(state, X, n, R).factors[n] - amdm_update(state, X, n).factors[n])))
    verdict("4 update equivalences", {"t=0": worst_als < 1e-12, "t=R": worst_amdm < 1e-12},
            f"max |general(0) - ALS| {worst_als:.1e}, max |general(R) - AMDM| {worst_amdm:.1e}")


def test_condition_number_oracle():
    t0 = time.perf_counter()
    worst = 0.0
    for shape, R in [((8, 8, 8), 3), ((5, 5, 5, 5), 2)]:
        for seed in range(20):
            _, m = random_cp(shape, R, seed)
            direct = condition_number_direct(m)
            worst = max(worst, abs(condition_number_compressed(m) - direct) / direct)
    elapsed = time.perf_counter() - t0
    verdict("5 condition number", {"agree": worst < 1e-10, "runtime": elapsed < 60},
            f"max relative gap {worst:.1e} over 40 models; {elapsed:.1f}s")


def test_contraction_slope():
    s3 = contraction_slope(3, 10, 4)
    s4 = contraction_slope(4, 6, 3)
    verdict("6 contraction slope", {"N=3": abs(s3 - 2) <= 0.3, "N=4": abs(s4 - 3) <= 0.3},
            f"N=3 slope {s3:.3f}, N=4 slope {s4:.3f}")


def test_planted_probability():
    t0 = time.perf_counter()
    rows, _, _ = planted_probability(s=10, rank_exact=10, rank=5, trials=20, guesses=5, eps=1e-3)
    elapsed = time.perf_counter() - t0
    p = [r["probability"] for r in rows]
    verdict("7 planted probability",
            {"small": p[0] == 1.0, "large": p[-1] <= 0.5,
             "monotone": all(a >= b for a, b in zip(p, p[1:])), "runtime": elapsed < 180},
            "P = " + ", ".join(f"{r['eps_perp']:g}:{r['probability']:.2f}" for r in rows) + f"; {elapsed:.1f}s")


def test_conditioning_tradeoff():
    t0 = time.perf_counter()
    rows, _, _ = noisy_collinear(s=40, rank=10, collinearity=0.9, sigma=1e-3, max_sweeps=200,
                                 schedule="decay:10:10")
    elapsed = time.perf_counter() - t0
    als, amdm, hyb = (last_sweep(rows, a) for a in ("als", "amdm", "hybrid"))
    verdict("8 conditioning trade-off",
            {"kappa ratio": als["cond"] / amdm["cond"] > 10,
             "amdm fitness": amdm["fitness"] >= als["fitness"] - 0.02,
             "hybrid fitness": hyb["fitness"] >= als["fitness"] - 0.005,
             "hybrid kappa": hyb["cond"] < als["cond"], "runtime": elapsed < 300},
            f"kappa ALS {als['cond']:.3g} AMDM {amdm['cond']:.3g} hybrid {hyb['cond']:.3g}; fitness ALS "
            f"{als['fitness']:.5f} AMDM {amdm['fitness']:.5f} hybrid {hyb['fitness']:.5f}; {elapsed:.1f}s")


seeds = st.integers(0, 2**32 - 1)


@settings(max_examples=25, deadline=None)
@given(seeds)
def _als_monotone(seed):
    g = np.random.default_rng(seed)
    X = g.standard_normal(tuple(int(v) for v in g.integers(3, 7, size=3)))
    state = SolverState.from_model(initial_model(X.shape, 2, g), rng=seed)
    prev = residual_and_fitness(state.model(), X)[0]
    for _ in range(3):
        for n in range(3):
            state = als_update(state, X, n)
            cur = residual_and_fitness(state.model(), X)[0]
            assert cur <= prev * (1 + 1e-10) + 1e-12
            prev = cur


@settings(max_examples=50, deadline=None)
@given(seeds)
def _kr_norm(seed):
    g = np.random.default_rng(seed)
    R = int(g.integers(1, 5))
    A, B = g.standard_normal((int(g.integers(1, 6)), R)), g.standard_normal((int(g.integers(1, 6)), R))
    assert np.linalg.norm(khatri_rao([A, B])) <= np.linalg.norm(A) * np.linalg.norm(B) * (1 + 1e-12)
    assert np.linalg.norm(khatri_rao([A, B]), 2) <= np.linalg.norm(A, 2) * np.linalg.norm(B, 2) * (1 + 1e-12)


@settings(max_examples=50, deadline=None)
@given(seeds)
def _penrose(seed):
    g = np.random.default_rng(seed)
    m, n, r = (int(v) for v in g.integers(1, 7, size=3))
    A = g.standard_normal((m, r)) @ g.standard_normal((r, n))
    P = pseudoinverse(A)
    scale = max(1.0, np.linalg.norm(A) * np.linalg.norm(P))
    np.testing.assert_allclose(A @ P @ A, A, atol=1e-10 * scale * np.linalg.norm(A))
    np.testing.assert_allclose(P @ A @ P, P, atol=1e-10 * scale * np.linalg.norm(P))
    np.testing.assert_allclose(A @ P, (A @ P).T, atol=1e-10 * scale)
    np.testing.assert_allclose(P @ A, (P @ A).T, atol=1e-10 * scale)


@settings(max_examples=50, deadline=None)
@given(seeds)
def _unfold_round_trip(seed):
    g = np.random.default_rng(seed)
    shape = tuple(int(v) for v in g.integers(1, 5, size=int(g.integers(1, 5))))
    X = g.standard_normal(shape)
    for n in range(len(shape)):
        np.testing.assert_array_equal(tensorize(matricize(X, n), shape, n), X)


def _fixed_point_defects():
    worst = 0.0
    for shape, R, seed in [((8, 8, 8), 3, 0), ((10, 9, 8), 4, 1), ((6, 6, 6, 6), 3, 2)]:
        X, _ = random_cp(shape, R, seed)
        res = run(X, SolverConfig(rank=R, algorithm="amdm", max_sweeps=100, tol_change=1e-14, tol_resid=0.0,
                                  seed=seed + 50))
        m = res.model
        worst = max(worst, np.max(stationarity_residual(m, X)), np.max(orthonormality_defect(m, X)),
                    spectral_diagonalization_defect(m, X))
    assert worst < 1e-8, f"largest fixed-point defect {worst:.1e}"
    return worst


def _rate_polynomials():
    worst = 0.0
    for N in range(3, 9):
        a = theoretical_rate(N)
        worst = max(worst, abs(a ** (N - 1) - sum(a**i for i in range(N - 1))))
    assert worst < 1e-12, f"polynomial residual {worst:.1e}"
    return worst


def test_property_suites():
    t0 = time.perf_counter()
    checks, notes = {}, []
    for name, fn in [("ALS monotone", _als_monotone), ("Khatri-Rao norm", _kr_norm), ("Penrose", _penrose),
                     ("unfold round trip", _unfold_round_trip), ("fixed-point defects", _fixed_point_defects),
                     ("rate polynomial", _rate_polynomials)]:
        try:
            value = fn()
            checks[name] = True
            if value is not None:
                notes.append(f"{name} {value:.1e}")
        except AssertionError as exc:
            checks[name] = False
            notes.append(f"{name}: {str(exc).splitlines()[0]}")
    elapsed = time.perf_counter() - t0
    checks["runtime"] = elapsed < 120
    verdict("9 property suites", checks, "; ".join(notes + [f"{elapsed:.1f}s"]))
