import numpy as np
import pytest

from astnet.errors import GradientCheckError, InputError
from astnet.numeric import affine, conv1d_same, grad_check, softmax

rng = np.random.default_rng(20240917)


class TestAffine:
    def test_identity(self):
        out = affine([1.0, 2.0], np.eye(2), [0.0, 0.0])
        np.testing.assert_array_equal(out, [1.0, 2.0])

    def test_hand_case(self):
        out = affine([1.0, 1.0], [[1.0, 1.0], [2.0, 0.0]], [1.0, 0.0])
        np.testing.assert_array_equal(out, [3.0, 2.0])

    def test_against_triple_loop_oracle(self):
        w = rng.normal(size=(5, 3))
        x = rng.normal(size=3)
        b = rng.normal(size=5)
        expected = np.zeros(5)
        for i in range(5):
            expected[i] = b[i]
            for j in range(3):
                expected[i] += w[i, j] * x[j]
        np.testing.assert_allclose(affine(x, w, b), expected, rtol=1e-12)

    def test_linearity(self):
        w = rng.normal(size=(4, 4))
        x = rng.normal(size=4)
        y = rng.normal(size=4)
        a, b = 0.7, -1.3
        zero = np.zeros(4)
        lhs = affine(a * x + b * y, w, zero)
        rhs = a * affine(x, w, zero) + b * affine(y, w, zero)
        np.testing.assert_allclose(lhs, rhs, rtol=1e-10)

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(InputError):
            affine([1.0, 2.0, 3.0], np.eye(2), [0.0, 0.0])
        with pytest.raises(InputError):
            affine([1.0, 2.0], np.eye(2), [0.0, 0.0, 0.0])

    def test_non_finite_rejected(self):
        with pytest.raises(InputError):
            affine([np.nan, 1.0], np.eye(2), [0.0, 0.0])


class TestSoftmax:
    def test_symmetry(self):
        np.testing.assert_allclose(softmax([0.0, 0.0, 0.0]), np.full(3, 1 / 3), rtol=1e-15)

    def test_shift_invariance_prevents_overflow(self):
        out = softmax([1000.0, 1000.0])
        np.testing.assert_allclose(out, [0.5, 0.5], rtol=1e-15)

    def test_extended_precision_oracle(self):
        # softmax([1, 2, 3]) evaluated with 50-digit mpmath arithmetic
        expected = [0.090030573170380457998, 0.24472847105479765247, 0.66524095577482188953]
        np.testing.assert_allclose(softmax([1.0, 2.0, 3.0]), expected, rtol=1e-14)

    @pytest.mark.parametrize("scale", [1.0, 1e3])
    def test_sums_to_one(self, scale):
        for _ in range(20):
            v = rng.normal(size=rng.integers(1, 12)) * scale
            out = softmax(v)
            assert abs(out.sum() - 1.0) <= 1e-12
            # huge spreads underflow far-tail entries to exactly 0.0 in
            # float64; non-negativity and the max entry stay exact
            assert np.all(out >= 0) and out.max() > 0

    def test_shift_invariance_random(self):
        v = rng.normal(size=7)
        np.testing.assert_allclose(softmax(v), softmax(v + 17.3), rtol=1e-12)


class TestConv1dSame:
    def test_identity_kernel(self):
        signal = rng.normal(size=(9, 1))
        out = conv1d_same(signal, np.array([[1.0]]))
        np.testing.assert_array_equal(out, signal)

    def test_impulse_against_sliding_window_oracle(self):
        kernel = np.array([[0.3, -1.1, 0.7]])
        signal = np.array([0.0, 1.0, 0.0])
        out = conv1d_same(signal, kernel)
        # direct sliding-window correlation with zero padding
        padded = np.concatenate([[0.0], signal, [0.0]])
        expected = np.array([
            sum(padded[n + k] * kernel[0, k] for k in range(3)) for n in range(3)
        ])
        np.testing.assert_allclose(out[:, 0], expected, rtol=1e-15)

    def test_random_against_sliding_window_oracle(self):
        signal = rng.normal(size=14)
        kernel = rng.normal(size=(4, 5))
        out = conv1d_same(signal, kernel)
        half = 2
        padded = np.concatenate([np.zeros(half), signal, np.zeros(half)])
        for n in range(14):
            for f in range(4):
                expected = sum(padded[n + k] * kernel[f, k] for k in range(5))
                assert abs(out[n, f] - expected) < 1e-12

    def test_zero_signal(self):
        out = conv1d_same(np.zeros((6, 2)), rng.normal(size=(3, 5, 2)))
        np.testing.assert_array_equal(out, np.zeros((6, 3)))

    def test_even_width_rejected(self):
        with pytest.raises(InputError):
            conv1d_same(np.ones(5), np.ones((1, 4)))

    def test_empty_signal_rejected(self):
        with pytest.raises(InputError):
            conv1d_same(np.zeros((0, 1)), np.ones((1, 3)))


class TestGradCheck:
    def test_quadratic(self):
        f = lambda p: float(np.sum(p["x"] ** 2))
        grad_fn = lambda p: {"x": 2.0 * p["x"]}
        report = grad_check(f, grad_fn, {"x": np.array([3.0])}, eps=1e-5)
        assert report.max_rel_error < 1e-8
        assert report.passed()

    def test_detects_wrong_gradient(self):
        f = lambda p: float(np.sum(p["x"] ** 2))
        grad_fn = lambda p: {"x": 3.0 * p["x"]}  # wrong on purpose
        report = grad_check(f, grad_fn, {"x": np.array([3.0])}, eps=1e-5)
        assert not report.passed()
        assert report.worst_param == "x"

    def test_eps_out_of_range_rejected(self):
        f = lambda p: float(np.sum(p["x"]))
        grad_fn = lambda p: {"x": np.ones_like(p["x"])}
        for eps in (1e-8, 1e-2):
            with pytest.raises(InputError):
                grad_check(f, grad_fn, {"x": np.ones(2)}, eps=eps)

    def test_non_finite_probe_names_parameter(self):
        def f(p):
            v = p["bad"][0]
            return float("nan") if v < 0 else float(v * v)

        grad_fn = lambda p: {"bad": np.zeros_like(p["bad"])}
        with pytest.raises(GradientCheckError) as err:
            grad_check(f, grad_fn, {"bad": np.array([0.0])}, eps=1e-5)
        assert err.value.param_name == "bad"

    def test_report_lists_every_group(self):
        f = lambda p: float(np.sum(p["a"] ** 2) + np.sum(p["b"] ** 2))
        grad_fn = lambda p: {"a": 2.0 * p["a"], "b": 2.0 * p["b"]}
        params = {"a": rng.normal(size=3) + 1.0, "b": rng.normal(size=(2, 2)) + 1.0}
        report = grad_check(f, grad_fn, params, eps=1e-5)
        assert set(report.per_param) == {"a", "b"}
        assert report.passed(1e-6)
