import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cpdkit.model import (
    KruskalModel,
    factor_recovery_error,
    normalize_model,
    reconstruct,
    residual_and_fitness,
)
from cpdkit.tensor import khatri_rao, tensorize


def random_model(rng, shape=(3, 4, 5), R=3):
    return KruskalModel(rng.uniform(0.5, 2.0, R), [rng.standard_normal((s, R)) for s in shape])


class TestReconstruct:
    def test_elementary(self):
        m = KruskalModel([1.0], [np.eye(s)[:, :1] for s in (2, 3, 2)])
        Y = reconstruct(m)
        expected = np.zeros((2, 3, 2))
        expected[0, 0, 0] = 1
        np.testing.assert_array_equal(Y, expected)

    def test_unfolding_oracle(self, rng):
        m = random_model(rng)
        K = khatri_rao([m.factors[2], m.factors[1]])
        ref = tensorize(m.factors[0] @ np.diag(m.weights) @ K.T, m.shape, 0)
        np.testing.assert_allclose(reconstruct(m), ref, rtol=1e-12, atol=1e-13)

    def test_zero_weights(self, rng):
        m = random_model(rng)
        m.weights[:] = 0
        np.testing.assert_array_equal(reconstruct(m), 0)

    def test_validation(self):
        with pytest.raises(ValueError):
            KruskalModel(np.ones(2), [np.ones((3, 2)), np.ones((3, 3))])


class TestResidual:
    def test_exact(self, rng):
        m = random_model(rng)
        r, f = residual_and_fitness(m, reconstruct(m))
        assert r == 0 and f == 1

    def test_zero_model(self, rng):
        X = rng.standard_normal((3, 4, 5))
        m = KruskalModel(np.zeros(2), [np.zeros((s, 2)) for s in X.shape])
        r, f = residual_and_fitness(m, X)
        assert r == pytest.approx(np.linalg.norm(X)) and f == pytest.approx(0)

    @given(st.integers(0, 10_000))
    def test_dual_path(self, seed):
        g = np.random.default_rng(seed)
        m = random_model(g)
        X = g.standard_normal(m.shape) + reconstruct(m)
        r_full, f_full = residual_and_fitness(m, X, "full")
        r_gram, f_gram = residual_and_fitness(m, X, "gram")
        assert abs(r_full - r_gram) <= 1e-8 * r_full
        assert f_full <= 1

    def test_errors(self, rng):
        m = random_model(rng)
        with pytest.raises(ValueError):
            residual_and_fitness(m, np.zeros(m.shape))
        with pytest.raises(ValueError):
            residual_and_fitness(m, np.ones((2, 2, 2)))
        with pytest.raises(ValueError):
            residual_and_fitness(m, np.ones(m.shape), method="other")

    def test_invariances(self, rng):
        m = random_model(rng)
        X = rng.standard_normal(m.shape)
        r0, _ = residual_and_fitness(m, X)
        perm = np.array([2, 0, 1])
        permuted = KruskalModel(m.weights[perm], [F[:, perm] for F in m.factors])
        scaled = KruskalModel(m.weights / 3, [m.factors[0] * 3, m.factors[1], m.factors[2]])
        assert residual_and_fitness(permuted, X)[0] == pytest.approx(r0, rel=1e-12)
        assert residual_and_fitness(scaled, X)[0] == pytest.approx(r0, rel=1e-12)


class TestNormalize:
    def test_already_normalized(self, rng):
        m = normalize_model(random_model(rng))
        again = normalize_model(m)
        np.testing.assert_allclose(again.weights, m.weights)
        for a, b in zip(again.factors, m.factors):
            np.testing.assert_allclose(a, b)

    def test_scaling_moves_to_weights(self, rng):
        m = random_model(rng)
        base = normalize_model(m)
        m.factors[0][:, 1] *= 7
        nm = normalize_model(m)
        assert nm.weights[1] == pytest.approx(7 * base.weights[1])
        np.testing.assert_allclose(reconstruct(nm), reconstruct(m), rtol=1e-12, atol=1e-12)

    def test_zero_column(self, rng):
        m = random_model(rng)
        m.factors[1][:, 0] = 0
        nm = normalize_model(m)
        assert nm.weights[0] == 0
        np.testing.assert_array_equal(nm.factors[1][:, 0], 0)

    @given(st.integers(0, 10_000))
    def test_reconstruction_preserved(self, seed):
        g = np.random.default_rng(seed)
        m = KruskalModel(g.standard_normal(3), [g.standard_normal((s, 3)) for s in (2, 3, 4)])
        nm = normalize_model(m)
        Y = reconstruct(m)
        assert np.all(nm.weights >= 0)
        np.testing.assert_allclose(reconstruct(nm), Y, atol=1e-12 * np.abs(Y).max())
        for F in nm.factors:
            np.testing.assert_allclose(np.linalg.norm(F, axis=0), 1, atol=1e-10)


class TestRecoveryError:
    def test_self(self, rng):
        m = random_model(rng)
        assert factor_recovery_error(m, m) == pytest.approx(0, abs=1e-14)

    def test_permutation_and_signs(self, rng):
        m = normalize_model(random_model(rng))
        perm = np.array([1, 2, 0])
        flip = np.array([-1.0, 1.0, -1.0])
        factors = [m.factors[0][:, perm] * flip, m.factors[1][:, perm] * flip, m.factors[2][:, perm]]
        ref = KruskalModel(m.weights[perm], factors)
        assert factor_recovery_error(m, ref) == pytest.approx(0, abs=1e-13)

    def test_perturbation_scale(self, rng):
        m = normalize_model(random_model(rng, (10, 10, 10), 3))
        factors = []
        for F in m.factors:
            D = rng.standard_normal(F.shape)
            factors.append(F + 1e-3 * D / np.linalg.norm(D))
        err = factor_recovery_error(KruskalModel(m.weights, factors), m)
        assert 1e-4 <= err <= 1e-2

    def test_rank_mismatch(self, rng):
        with pytest.raises(ValueError):
            factor_recovery_error(random_model(rng, R=2), random_model(rng, R=3))
