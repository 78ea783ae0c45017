"""Core numerics: cosine, temperature softmax, KL divergences, finite differences.

Expected values come from closed forms (math.log) or an extended-precision
oracle (mpmath at 50 digits), never from the implementation under test.
"""

import math

import mpmath
import numpy as np
import pytest

from embalign.mathutils import cosine, finite_diff_grad, kl, rel_error, softmax_t, sym_kl

mpmath.mp.dps = 50


class TestCosine:
    def test_identical_unit_vectors(self):
        assert cosine([1.0, 0.0], [1.0, 0.0]) == 1.0

    def test_orthogonal(self):
        assert cosine([1.0, 0.0], [0.0, 1.0]) == 0.0

    def test_forced_dot_product(self):
        assert cosine([1.0, 0.0], [0.6, 0.8]) == pytest.approx(0.6, abs=1e-15)

    def test_self_cosine_is_exactly_one(self, rng):
        for _ in range(50):
            v = rng.standard_normal(8)
            assert cosine(v, v) == 1.0

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="mismatch"):
            cosine([1.0, 0.0], [1.0, 0.0, 0.0])

    def test_zero_vector(self):
        with pytest.raises(ValueError, match="zero"):
            cosine([0.0, 0.0], [1.0, 0.0])

    def test_scale_invariance(self, rng):
        u = rng.standard_normal(6)
        v = rng.standard_normal(6)
        assert cosine(u, v) == pytest.approx(cosine(3.7 * u, 0.2 * v), abs=1e-12)


class TestSoftmaxT:
    def test_equal_inputs_uniform(self):
        for tau in (0.02, 1.0, 37.0):
            p = softmax_t([3.3, 3.3, 3.3], tau)
            np.testing.assert_allclose(p, [1 / 3] * 3, atol=1e-15)

    def test_two_entry_oracle(self):
        # e/(e+1) via extended precision
        expected = float(mpmath.exp(1) / (mpmath.exp(1) + 1))
        p = softmax_t([1.0, 0.0], 1.0)
        assert p[0] == pytest.approx(expected, abs=1e-15)
        assert p[1] == pytest.approx(1.0 - expected, abs=1e-15)

    def test_low_temperature_saturation(self):
        # exp(40)/(exp(40)+1) per the oracle: gap 0.8 at tau 0.02
        p = softmax_t([0.9, 0.1], 0.02)
        assert p[0] > 1.0 - 1e-15

    def test_tau_must_be_positive(self):
        with pytest.raises(ValueError, match="tau"):
            softmax_t([1.0, 2.0], 0.0)
        with pytest.raises(ValueError, match="tau"):
            softmax_t([1.0, 2.0], -0.5)

    def test_sums_to_one_and_positive(self, rng):
        # Operating domain: cosine-like inputs in [-1,1] at tau >= 0.01.
        for _ in range(1000):
            n = int(rng.integers(2, 12))
            x = rng.uniform(-1.0, 1.0, size=n)
            tau = float(rng.uniform(0.01, 2.0))
            p = softmax_t(x, tau)
            assert abs(p.sum() - 1.0) <= 1e-12
            assert np.all(p > 0)

    def test_constant_shift_invariance(self, rng):
        for _ in range(100):
            x = rng.standard_normal(6)
            shift = float(rng.uniform(-100, 100))
            p1 = softmax_t(x, 0.02)
            p2 = softmax_t(x + shift, 0.02)
            np.testing.assert_allclose(p1, p2, atol=1e-12)

    def test_handles_extreme_logits(self):
        p = softmax_t([1.0, 0.0], 0.001)  # logits of 1000 pre-subtraction
        assert np.isfinite(p).all() and abs(p.sum() - 1.0) <= 1e-12


class TestKL:
    def test_identical_uniform_is_zero(self):
        p = [0.25, 0.25, 0.25, 0.25]
        assert kl(p, p) == 0.0

    def test_point_mass_vs_uniform(self):
        assert kl([1.0, 0.0], [0.5, 0.5]) == pytest.approx(math.log(2), abs=1e-15)

    def test_gibbs_inequality(self, rng):
        for _ in range(1000):
            n = int(rng.integers(2, 10))
            p = softmax_t(rng.standard_normal(n), 1.0)
            q = softmax_t(rng.standard_normal(n), 1.0)
            assert kl(p, q) >= 0.0

    def test_self_kl_within_1e15(self, rng):
        for _ in range(100):
            p = softmax_t(rng.standard_normal(5), 0.5)
            assert abs(kl(p, p)) <= 1e-15

    def test_length_mismatch(self):
        with pytest.raises(ValueError, match="mismatch"):
            kl([0.5, 0.5], [0.3, 0.3, 0.4])

    def test_zero_q_with_positive_p(self):
        with pytest.raises(ValueError, match="zero"):
            kl([0.5, 0.5], [1.0, 0.0])

    def test_zero_times_log_zero_convention(self):
        # 0*log(0/q) contributes nothing
        assert kl([0.0, 1.0], [0.5, 0.5]) == pytest.approx(math.log(2), abs=1e-15)


class TestSymKL:
    def test_identical_is_zero(self, rng):
        p = softmax_t(rng.standard_normal(4), 1.0)
        assert sym_kl(p, p) == 0.0

    def test_symmetry_bit_for_bit(self, rng):
        for _ in range(200):
            n = int(rng.integers(2, 8))
            p = softmax_t(rng.standard_normal(n), 0.5)
            q = softmax_t(rng.standard_normal(n), 0.5)
            assert sym_kl(p, q) == sym_kl(q, p)

    def test_support_requirement(self):
        # KL(q || p) needs p > 0 wherever q > 0
        with pytest.raises(ValueError, match="zero"):
            sym_kl([1.0, 0.0], [0.5, 0.5])

    def test_closed_form_value(self):
        # 0.5*(0.9 ln(1.8) + 0.1 ln(0.2) + 0.5 ln(5/9) + 0.5 ln 5), frozen
        # from a 50-digit evaluation.
        expected = 0.4394449154672439
        hand = 0.5 * (
            0.9 * math.log(0.9 / 0.5) + 0.1 * math.log(0.1 / 0.5)
            + 0.5 * math.log(0.5 / 0.9) + 0.5 * math.log(0.5 / 0.1)
        )
        got = sym_kl([0.9, 0.1], [0.5, 0.5])
        assert got == pytest.approx(expected, abs=1e-15)
        assert got == pytest.approx(hand, abs=1e-15)

    def test_nonnegative(self, rng):
        for _ in range(500):
            n = int(rng.integers(2, 10))
            p = softmax_t(rng.standard_normal(n), 1.0)
            q = softmax_t(rng.standard_normal(n), 1.0)
            assert sym_kl(p, q) >= 0.0


class TestFiniteDiffGrad:
    def test_quadratic(self):
        grad = finite_diff_grad(lambda x: float(np.sum(x * x)), np.array([1.0, 2.0]), h=1e-5)
        np.testing.assert_allclose(grad, [2.0, 4.0], atol=1e-6)

    def test_constant_function(self):
        grad = finite_diff_grad(lambda x: 7.5, np.array([0.3, -0.2, 1.0]), h=1e-5)
        np.testing.assert_array_equal(grad, np.zeros(3))

    def test_matches_hand_derived_softmax_symkl_gradient(self, rng):
        # d sym_kl(softmax(x/tau), q) / dx via the softmax Jacobian, derived
        # here independently of the aligner's implementation.
        tau = 0.5
        q = softmax_t(rng.standard_normal(5), 1.0)

        def f(x):
            return sym_kl(softmax_t(x, tau), q)

        for _ in range(10):
            x = rng.standard_normal(5)
            p = softmax_t(x, tau)
            g = 0.5 * (np.log(p / q) + 1.0 - q / p)
            analytic = p * (g - float(np.dot(g, p))) / tau
            numeric = finite_diff_grad(f, x, h=1e-5)
            assert rel_error(analytic, numeric) < 1e-4

    def test_rejects_nonpositive_h(self):
        with pytest.raises(ValueError, match="h"):
            finite_diff_grad(lambda x: 0.0, np.array([1.0]), h=0.0)

    def test_rejects_non_finite_f(self):
        with pytest.raises(ValueError, match="non-finite"):
            finite_diff_grad(lambda x: float("nan"), np.array([1.0]), h=1e-5)
