import numpy as np
import pytest
from hypothesis import given, strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from featureless.classify import (ClassifyError, LinearModel, average_precision, evaluate_ovr, fit_linear_ovr,
                                  mean_average_precision, predict_class, predict_margin, ranked_average_precision)


class TestSvm:
    def test_separable(self, rng):
        X = np.concatenate([rng.normal(-3, 0.5, (40, 2)), rng.normal(3, 0.5, (40, 2))])
        y = np.repeat([0, 1], 40)
        m = fit_linear_ovr(X, y, epochs=20)
        assert (predict_class(m, X) == y).mean() == 1.0

    def test_determinism(self, rng):
        X, y = rng.normal(size=(30, 5)), rng.integers(0, 3, 30)
        a, b = fit_linear_ovr(X, y, epochs=5, seed=3), fit_linear_ovr(X, y, epochs=5, seed=3)
        assert a.weights.tobytes() == b.weights.tobytes()

    def test_errors(self, rng):
        with pytest.raises(ClassifyError):
            fit_linear_ovr(rng.normal(size=(5, 2)), np.zeros(5, int))
        with pytest.raises(ClassifyError):
            fit_linear_ovr(rng.normal(size=(5, 2)), np.zeros(4, int))

    def test_weights_finite(self, rng):
        X, y = rng.normal(size=(50, 8)) * 100, rng.integers(0, 4, 50)
        m = fit_linear_ovr(X, y, epochs=3)
        assert np.all(np.isfinite(m.weights)) and m.weights.shape == (4, 8)


class TestMargin:
    def setup_method(self):
        r = np.random.default_rng(0)
        self.m = LinearModel(r.normal(size=(3, 4)), r.normal(size=3))

    def test_zero_and_scale(self):
        assert_allclose(predict_margin(self.m, np.zeros(4)), self.m.biases)
        x = np.arange(4.0)
        assert_allclose(predict_margin(self.m, 2 * x) - self.m.biases,
                        2 * (predict_margin(self.m, x) - self.m.biases))

    def test_dot_oracle(self, rng):
        X = rng.normal(size=(20, 4))
        ref = [[sum(self.m.weights[c, j] * x[j] for j in range(4)) + self.m.biases[c] for c in range(3)] for x in X]
        assert_allclose(predict_margin(self.m, X), ref)

    def test_mismatch(self):
        with pytest.raises(ClassifyError):
            predict_margin(self.m, np.zeros(5))

    @given(st.floats(-5, 5), st.floats(-5, 5), st.integers(0, 2**32 - 1))
    def test_affine(self, a, b, seed):
        r = np.random.default_rng(seed)
        x, z = r.normal(size=4), r.normal(size=4)
        f = lambda v: predict_margin(self.m, v)
        assert_allclose(f(a * x + b * z), a * f(x) + b * f(z) - (a + b - 1) * self.m.biases, atol=1e-9)


class TestAp:
    def test_examples(self):
        assert ranked_average_precision([1, 0, 0]) == 1.0
        assert ranked_average_precision([0, 1]) == 0.5
        assert_allclose(ranked_average_precision([1, 0, 1, 0]), 5 / 6)

    def test_ties_keep_input_order(self):
        assert average_precision([1.0, 1.0], [False, True]) == 0.5

    def test_no_positive(self):
        with pytest.raises(ClassifyError):
            average_precision([1.0, 2.0], [False, False])
        with pytest.raises(ClassifyError):
            mean_average_precision([])

    @given(st.lists(st.integers(-200, 200), min_size=2, max_size=30, unique=True), st.integers(0, 2**32 - 1))
    def test_monotone_invariance(self, scores, seed):
        s = np.array(scores) / 20.0
        pos = np.random.default_rng(seed).random(len(s)) < 0.5
        pos[0] = True
        assert_allclose(average_precision(np.exp(s / 3) * 2 + 1, pos), average_precision(s, pos))

    def test_perfect_and_reversed(self):
        y = np.repeat(np.arange(3), 4)
        assert evaluate_ovr(np.eye(3)[y], y)["map"] == 1.0
        n = 6
        labels = np.array([0, 1, 2, 3, 4, 5])
        margins = -np.eye(n)[labels]  # each class's only positive is ranked last
        res = evaluate_ovr(margins, labels)
        assert_allclose(list(res["per_class_ap"].values()), 1 / n)
        assert_array_equal(sorted(res["per_class_ap"]), range(n))
