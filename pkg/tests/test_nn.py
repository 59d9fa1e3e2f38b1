import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from lilaw_lab.nn import (
    AdamState,
    Gradients,
    MlpModel,
    adam_step,
    backward,
    cross_entropy,
    focal_loss,
    forward,
    init_model,
    softmax,
)


def mp_softmax(values):
    mpmath.mp.dps = 50
    e = [mpmath.exp(mpmath.mpf(v)) for v in values]
    tot = mpmath.fsum(e)
    return [float(x / tot) for x in e]


class TestSoftmax:
    def test_symmetric(self):
        np.testing.assert_array_equal(softmax([0.0, 0.0]), [0.5, 0.5])

    def test_log19(self):
        np.testing.assert_allclose(softmax([math.log(19), 0.0]), [0.95, 0.05], rtol=0, atol=1e-15)

    def test_against_extended_precision(self):
        np.testing.assert_allclose(softmax([3.1, -0.7, 1.4]), mp_softmax([3.1, -0.7, 1.4]), rtol=1e-14)

    def test_batch_rows(self, rng):
        z = rng.normal(size=(6, 4)) * 5
        p = softmax(z)
        for row, zr in zip(p, z):
            np.testing.assert_allclose(row, mp_softmax(zr), rtol=1e-13)

    def test_large_logits_stable(self):
        p = softmax([1000.0, 999.0])
        assert np.all(np.isfinite(p))

    @pytest.mark.parametrize("bad", [[np.nan, 0.0], [np.inf, 1.0]])
    def test_non_finite_rejected(self, bad):
        with pytest.raises(ValueError):
            softmax(bad)

    def test_needs_two_classes(self):
        with pytest.raises(ValueError):
            softmax([1.0])

    @settings(max_examples=200)
    @given(arrays(np.float64, st.integers(2, 12), elements=st.floats(-50, 50)),
           st.floats(-100, 100))
    def test_sums_to_one_and_shift_invariant(self, z, k):
        p = softmax(z)
        assert abs(p.sum() - 1.0) <= 1e-9
        np.testing.assert_allclose(softmax(z + k), p, rtol=0, atol=1e-9)


class TestLosses:
    @pytest.mark.parametrize("p, expected", [(0.95, 0.051), (0.60, 0.511), (0.40, 0.916), (0.05, 2.996)])
    def test_cross_entropy_table_values(self, p, expected):
        probs = np.array([p, 1 - p])
        assert round(cross_entropy(probs, 0), 3) == expected

    def test_cross_entropy_of_certain_label(self):
        assert cross_entropy(np.array([0.0, 1.0]), 1) == 0.0

    def test_cross_entropy_clamped(self):
        assert cross_entropy(np.array([1.0, 0.0]), 1) == pytest.approx(-math.log(1e-12))

    def test_label_out_of_range(self):
        with pytest.raises(ValueError):
            cross_entropy(np.array([0.5, 0.5]), 2)
        with pytest.raises(ValueError):
            focal_loss(np.array([0.5, 0.5]), -1, 2.0)

    def test_focal_gamma_zero_is_cross_entropy(self, rng):
        p = rng.dirichlet(np.ones(5), size=50)
        y = rng.integers(0, 5, size=50)
        np.testing.assert_array_equal(focal_loss(p, y, 0.0), cross_entropy(p, y))

    def test_focal_certain_label(self):
        assert focal_loss(np.array([1.0, 0.0]), 0, 3.0) == 0.0

    def test_focal_reference_value(self):
        mpmath.mp.dps = 40
        expected = float(-(1 - mpmath.mpf("0.6")) ** 2 * mpmath.log(mpmath.mpf("0.6")))
        got = focal_loss(np.array([0.6, 0.4]), 0, 2.0)
        assert got == pytest.approx(expected, rel=1e-14)
        assert round(got, 5) == 0.08173


def naive_forward(model, x):
    h = [list(map(float, row)) for row in x]
    for li, (w, b) in enumerate(zip(model.weights, model.biases)):
        out = []
        for row in h:
            z = []
            for j in range(w.shape[1]):
                acc = float(b[j])
                for i in range(w.shape[0]):
                    acc += row[i] * float(w[i, j])
                z.append(acc)
            if li < len(model.weights) - 1:
                z = [max(v, 0.0) if model.activation == "relu" else math.tanh(v) for v in z]
            out.append(z)
        h = out
    return np.array(h)


class TestForward:
    def test_zero_model(self):
        m = MlpModel([3, 4, 2], [np.zeros((3, 4)), np.zeros((4, 2))], [np.zeros(4), np.zeros(2)])
        logits, _ = forward(m, np.ones((5, 3)))
        np.testing.assert_array_equal(logits, np.zeros((5, 2)))

    def test_identity_single_layer(self, rng):
        m = MlpModel([3, 3], [np.eye(3)], [np.zeros(3)])
        x = rng.normal(size=(4, 3))
        np.testing.assert_array_equal(forward(m, x)[0], x)

    @pytest.mark.parametrize("activation", ["relu", "tanh"])
    def test_matches_triple_loop(self, rng, activation):
        m = init_model(3, [5, 7, 6, 3], activation)
        m.biases = [rng.normal(size=b.shape) for b in m.biases]
        x = rng.normal(size=(8, 5))
        np.testing.assert_allclose(forward(m, x)[0], naive_forward(m, x), rtol=1e-12, atol=1e-12)

    def test_deterministic(self, rng):
        m = init_model(0, [4, 8, 3])
        x = rng.normal(size=(5, 4))
        np.testing.assert_array_equal(forward(m, x)[0], forward(m, x)[0])

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            forward(init_model(0, [4, 3]), np.zeros((2, 5)))


def loss_of(model, x, y, w, base_loss="cross_entropy", gamma=2.0):
    logits, _ = forward(model, x)
    p = softmax(logits)
    per = cross_entropy(p, y) if base_loss == "cross_entropy" else focal_loss(p, y, gamma)
    return float(np.mean(w * per))


def fd_gradients(model, x, y, w, h=1e-5, **kw):
    out = []
    for p in model.params():
        g = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + h
            up = loss_of(model, x, y, w, **kw)
            p[idx] = old - h
            down = loss_of(model, x, y, w, **kw)
            p[idx] = old
            g[idx] = (up - down) / (2 * h)
        out.append(g)
    return out


def analytic(model, x, y, w, **kw):
    logits, cache = forward(model, x)
    return backward(model, cache, softmax(logits), y, w, **kw).params()


def max_rel_err(a, b, floor=1e-8):
    return max(float(np.max(np.abs(u - v) / np.maximum(np.maximum(np.abs(u), np.abs(v)), floor)))
               for u, v in zip(a, b))


class TestBackward:
    @pytest.mark.parametrize("seed", range(4))
    @pytest.mark.parametrize("base_loss", ["cross_entropy", "focal"])
    def test_finite_differences_tanh(self, seed, base_loss):
        rng = np.random.default_rng(seed)
        m = init_model(seed, [5, 6, 3], "tanh")
        m.biases = [rng.normal(size=b.shape) * 0.1 for b in m.biases]
        x = rng.normal(size=(4, 5))
        y = rng.integers(0, 3, size=4)
        w = rng.uniform(0.3, 2.5, size=4)
        kw = {"base_loss": base_loss, "gamma": 2.0}
        assert max_rel_err(analytic(m, x, y, w, **kw), fd_gradients(m, x, y, w, **kw)) < 1e-5

    @pytest.mark.parametrize("seed", range(3))
    def test_finite_differences_relu(self, seed):
        rng = np.random.default_rng(100 + seed)
        m = init_model(seed, [6, 10, 8, 4], "relu")
        x = rng.normal(size=(8, 6))
        y = rng.integers(0, 4, size=8)
        w = rng.uniform(0.5, 2.0, size=8)
        a = np.concatenate([g.ravel() for g in analytic(m, x, y, w)])
        f = np.concatenate([g.ravel() for g in fd_gradients(m, x, y, w)])
        assert np.linalg.norm(a - f) / np.linalg.norm(f) < 1e-5

    def test_zero_weights_zero_gradients(self, rng):
        m = init_model(1, [4, 5, 3])
        x = rng.normal(size=(6, 4))
        for g in analytic(m, x, rng.integers(0, 3, 6), np.zeros(6)):
            assert not g.any()

    def test_linear_in_uniform_weight(self, rng):
        m = init_model(2, [4, 5, 3])
        x = rng.normal(size=(6, 4))
        y = rng.integers(0, 3, 6)
        unit = analytic(m, x, y, np.ones(6))
        scaled = analytic(m, x, y, np.full(6, 1.7))
        for u, s in zip(unit, scaled):
            np.testing.assert_allclose(s, 1.7 * u, rtol=0, atol=1e-9)

    def test_rejects_negative_weights(self, rng):
        m = init_model(0, [3, 2])
        logits, cache = forward(m, np.ones((2, 3)))
        with pytest.raises(ValueError):
            backward(m, cache, softmax(logits), np.array([0, 1]), np.array([1.0, -1.0]))

    def test_shape_mismatch(self):
        m = init_model(0, [3, 2])
        logits, cache = forward(m, np.ones((2, 3)))
        with pytest.raises(ValueError):
            backward(m, cache, softmax(logits), np.array([0, 1, 1]), np.ones(3))


def scalar_adam_reference(theta, grads, lr, b1=0.9, b2=0.999, eps=1e-8):
    m = v = 0.0
    out = []
    for t, g in enumerate(grads, start=1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        theta -= lr * (m / (1 - b1**t)) / (math.sqrt(v / (1 - b2**t)) + eps)
        out.append(theta)
    return out


def scalar_model(value):
    return MlpModel([1, 2], [np.array([[value, 0.0]])], [np.zeros(2)])


class TestAdam:
    def test_zero_gradient_no_change(self):
        m = init_model(0, [3, 4, 2])
        zero = Gradients([np.zeros_like(w) for w in m.weights], [np.zeros_like(b) for b in m.biases])
        new, state = adam_step(m, zero, AdamState.zeros_like(m), lr=0.1, wd=0.0)
        for a, b in zip(new.params(), m.params()):
            np.testing.assert_array_equal(a, b)
        assert state.step == 1

    def test_first_step_is_sign_step(self, rng):
        m = init_model(0, [3, 2])
        g = Gradients([rng.normal(size=(3, 2))], [rng.normal(size=2)])
        new, _ = adam_step(m, g, AdamState.zeros_like(m), lr=0.01)
        for p0, p1, gg in zip(m.params(), new.params(), g.params()):
            np.testing.assert_allclose(p1, p0 - 0.01 * gg / (np.abs(gg) + 1e-8), rtol=1e-12)

    def test_three_scalar_steps(self):
        grads = [0.3, -1.2, 0.05]
        model = scalar_model(1.5)
        state = AdamState.zeros_like(model)
        got = []
        for g in grads:
            grad = Gradients([np.array([[g, 0.0]])], [np.zeros(2)])
            model, state = adam_step(model, grad, state, lr=0.1)
            got.append(model.weights[0][0, 0])
        np.testing.assert_allclose(got, scalar_adam_reference(1.5, grads, 0.1), rtol=1e-14)

    def test_decoupled_weight_decay(self):
        model = scalar_model(2.0)
        grad = Gradients([np.zeros((1, 2))], [np.zeros(2)])
        new, _ = adam_step(model, grad, AdamState.zeros_like(model), lr=0.1, wd=0.5)
        assert new.weights[0][0, 0] == pytest.approx(2.0 - 0.1 * 0.5 * 2.0)

    def test_inputs_not_mutated(self, rng):
        m = init_model(0, [3, 2])
        before = [p.copy() for p in m.params()]
        g = Gradients([rng.normal(size=(3, 2))], [rng.normal(size=2)])
        adam_step(m, g, AdamState.zeros_like(m), lr=0.1)
        for a, b in zip(before, m.params()):
            np.testing.assert_array_equal(a, b)


class TestInit:
    def test_deterministic(self):
        a, b = init_model(7, [5, 8, 3]), init_model(7, [5, 8, 3])
        for x, y in zip(a.params(), b.params()):
            np.testing.assert_array_equal(x, y)

    def test_biases_zero(self):
        assert all(not b.any() for b in init_model(1, [5, 8, 3]).biases)

    def test_glorot_bound(self):
        m = init_model(3, [50, 30, 4])
        for w in m.weights:
            bound = math.sqrt(6.0 / sum(w.shape))
            assert np.abs(w).max() <= bound
            assert np.abs(w).max() > 0.9 * bound

    @pytest.mark.parametrize("sizes", [[], [4], [4, 1], [4, 0, 3]])
    def test_bad_layer_sizes(self, sizes):
        with pytest.raises(ValueError):
            init_model(0, sizes)
