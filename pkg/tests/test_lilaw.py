import math
from dataclasses import replace

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lilaw_lab import kernels
from lilaw_lab.lilaw import (
    LilawGrads,
    LilawParams,
    SoftmaxRow,
    component_weights,
    grad_params,
    grads_from_pairs,
    meta_update,
    sample_weight,
    weight_alpha,
    weight_beta,
    weight_delta,
    weighted_loss,
)

# (s_true, s_max) -> (W_alpha, W_delta, W_beta, W, L_W, CE) at alpha=9, beta=3, delta=7
GOLDEN = [
    ((0.95, 0.95), (0.999, 0.000, 0.130, 1.129, 0.058, 0.051)),
    ((0.60, 0.60), (0.992, 0.002, 0.231, 1.225, 0.626, 0.511)),
    ((0.40, 0.60), (0.953, 0.089, 0.354, 1.396, 1.279, 0.916)),
    ((0.05, 0.95), (0.378, 0.835, 0.690, 1.903, 5.700, 2.996)),
]
P973 = LilawParams(alpha=9.0, beta=3.0, delta=7.0)


def golden_probs(s, m):
    """A two- or three-class row whose label probability is s and maximum is m."""
    if s == m:
        return np.array([s, 1 - s]) if s >= 0.5 else np.array([s, s, 1 - 2 * s])
    return np.array([s, m, 1 - s - m])


def sigmoid(z):
    return 1 / (1 + math.exp(-z))


class TestSoftmaxRow:
    def test_properties(self):
        row = SoftmaxRow(np.array([0.2, 0.5, 0.3]), 2)
        assert row.s_true == 0.3 and row.s_max == 0.5

    @pytest.mark.parametrize("probs, label", [([1.0], 0), ([0.6, 0.6], 0), ([0.5, 0.5], 2), ([-0.1, 1.1], 0)])
    def test_invalid(self, probs, label):
        with pytest.raises(ValueError):
            SoftmaxRow(np.array(probs), label)


class TestGolden:
    @pytest.mark.parametrize("pair, expected", GOLDEN)
    def test_table_row(self, pair, expected):
        s, m = pair
        wa_e, wd_e, wb_e, w_e, lw_e, ce_e = expected
        wa, wb, wd, w = (float(v[0]) for v in component_weights(s, m, P973))
        assert round(wa, 3) == wa_e
        assert round(wb, 3) == wb_e
        assert round(wd, 3) == wd_e
        # the table's W column is the sum of its displayed (rounded) terms
        assert round(round(wa, 3) + round(wb, 3) + round(wd, 3), 3) == w_e
        assert abs(w - w_e) < 1e-3
        probs = golden_probs(s, m)[None, :]
        res = weighted_loss(probs, np.array([0]), P973)
        assert round(float(res.base[0]), 3) == ce_e
        assert round(res.mean, 3) == lw_e

    def test_scalar_helpers(self):
        assert round(float(weight_alpha(0.95, 0.95, 9)), 3) == 0.999
        assert round(float(weight_alpha(0.05, 0.95, 9)), 3) == 0.378
        assert round(float(weight_beta(0.95, 0.95, 3)), 3) == 0.130
        assert round(float(weight_beta(0.05, 0.95, 3)), 3) == 0.690
        assert round(float(weight_delta(0.05, 0.95, 7)), 3) == 0.835
        assert round(float(weight_delta(0.40, 0.60, 7)), 3) == 0.089

    def test_trivial_points(self):
        assert weight_alpha(0.7, 0.7, 1.0) == 0.5
        assert weight_beta(0.7, 0.7, 1.0) == 0.5
        assert weight_delta(0.25, 0.5, 2.0) == 1.0

    def test_zero_loss_zero_weighted_loss(self):
        res = weighted_loss(np.array([[1.0, 0.0]]), np.array([0]), LilawParams())
        assert res.per_sample[0] == 0.0


class TestAblation:
    @pytest.mark.parametrize("mask, idx", [((True, False, False), 0), ((False, True, False), 1),
                                           ((False, False, True), 2)])
    def test_single_term_equals_component(self, rng, mask, idx):
        s = rng.uniform(0, 0.5, 200)
        m = s + rng.uniform(0, 0.5, 200)
        p = replace(P973, enabled=mask)
        comps = component_weights(s, m, p)
        np.testing.assert_array_equal(comps[3], comps[idx])

    def test_delta_only_at_peak(self):
        p = LilawParams(delta=2.0, enabled=(False, False, True))
        assert sample_weight(0.25, 0.5, p) == 1.0

    def test_all_disabled_rejected(self):
        p = LilawParams(enabled=(False, False, False))
        with pytest.raises(ValueError):
            sample_weight(0.5, 0.5, p)
        with pytest.raises(ValueError):
            grads_from_pairs(np.array([0.5]), np.array([0.5]), np.array([1.0]), p)

    def test_sum_bounds(self, rng):
        s = rng.uniform(0, 1, 5000)
        m = np.maximum(s, rng.uniform(0, 1, 5000))
        w = component_weights(s, m, P973)[3]
        assert np.all(w > sigmoid(-1) + sigmoid(1 - 3))
        assert np.all(w < sigmoid(9 - 1) + sigmoid(1) + 1)


def random_rows(rng, n):
    """(s_true, s_max, loss) for n rows drawn from Dirichlet softmax outputs of random width."""
    out = np.empty((n, 3))
    for i in range(n):
        c = int(rng.integers(2, 11))
        p = rng.dirichlet(np.ones(c))
        y = int(rng.integers(c))
        out[i] = p[y], p.max(), -math.log(p[y])
    return out


def random_params(rng):
    return LilawParams(alpha=rng.uniform(1, 20), beta=rng.uniform(0.1, 20), delta=rng.uniform(0.1, 20))


def mp_weighted_loss(s, m, loss, alpha, beta, delta):
    s, m, loss = mpmath.mpf(s), mpmath.mpf(m), mpmath.mpf(loss)
    w = (1 / (1 + mpmath.exp(-(alpha * s - m))) + 1 / (1 + mpmath.exp(beta * s - m))
         + mpmath.exp(-(delta * s - m) ** 2 / 2))
    return w * loss


class TestGradients:
    def test_zero_losses(self, rng):
        s = rng.uniform(0, 1, 10)
        g = grads_from_pairs(s, s, np.zeros(10), P973)
        assert (g.d_alpha, g.d_beta, g.d_delta) == (0.0, 0.0, 0.0)

    def test_delta_zero_at_peak(self):
        g = grads_from_pairs(np.array([0.25]), np.array([0.5]), np.array([1.3]), LilawParams(delta=2.0))
        assert g.d_delta == 0.0

    def test_reference_row_float_fd(self):
        """Central differences of the float64 weighted loss itself, h = 1e-6."""
        probs = np.array([[0.4, 0.6]])
        y = np.array([0])
        g = grad_params(probs, y, P973)
        h = 1e-6
        for name, analytic in zip(("alpha", "beta", "delta"), (g.d_alpha, g.d_beta, g.d_delta)):
            v = getattr(P973, name)
            up = weighted_loss(probs, y, replace(P973, **{name: v + h})).mean
            down = weighted_loss(probs, y, replace(P973, **{name: v - h})).mean
            fd = (up - down) / (2 * h)
            assert abs(analytic - fd) / abs(fd) < 1e-6

    def test_thousand_rows_extended_precision_fd(self):
        rng = np.random.default_rng(2024)
        rows = random_rows(rng, 1000)
        # weight terms reach ~1e-87 next to O(1) terms; keep enough digits to difference them
        mpmath.mp.dps = 150
        h = mpmath.mpf("1e-6")
        worst = 0.0
        for s, m, loss in rows:
            p = random_params(rng)
            g = grads_from_pairs(np.array([s]), np.array([m]), np.array([loss]), p)
            a, b, d = (mpmath.mpf(x) for x in p.values)
            fds = (
                (mp_weighted_loss(s, m, loss, a + h, b, d) - mp_weighted_loss(s, m, loss, a - h, b, d)) / (2 * h),
                (mp_weighted_loss(s, m, loss, a, b + h, d) - mp_weighted_loss(s, m, loss, a, b - h, d)) / (2 * h),
                (mp_weighted_loss(s, m, loss, a, b, d + h) - mp_weighted_loss(s, m, loss, a, b, d - h)) / (2 * h),
            )
            for analytic, fd in zip((g.d_alpha, g.d_beta, g.d_delta), fds):
                fd = float(fd)
                worst = max(worst, abs(analytic - fd) / abs(fd))
        assert worst < 1e-6

    def test_batch_mean(self, rng):
        rows = random_rows(rng, 40)
        full = grads_from_pairs(rows[:, 0], rows[:, 1], rows[:, 2], P973)
        parts = [grads_from_pairs(r[:1], r[1:2], r[2:], P973) for r in rows]
        assert full.d_alpha == pytest.approx(np.mean([g.d_alpha for g in parts]), rel=1e-12)
        assert full.d_beta == pytest.approx(np.mean([g.d_beta for g in parts]), rel=1e-12)
        assert full.d_delta == pytest.approx(np.mean([g.d_delta for g in parts]), rel=1e-12)

    def test_disabled_terms_zero_gradient(self, rng):
        rows = random_rows(rng, 30)
        g = grads_from_pairs(rows[:, 0], rows[:, 1], rows[:, 2], replace(P973, enabled=(False, True, False)))
        assert g.d_alpha == 0.0 and g.d_delta == 0.0 and g.d_beta < 0

    def test_signs_randomized(self):
        rng = np.random.default_rng(7)
        for _ in range(10_000):
            n = int(rng.integers(1, 33))
            c = int(rng.integers(2, 11))
            probs = rng.dirichlet(np.ones(c) * rng.uniform(0.1, 3), size=n)
            y = rng.integers(0, c, n)
            g = grad_params(probs, y, random_params(rng))
            assert g.d_alpha >= 0.0
            assert g.d_beta <= 0.0

    @settings(max_examples=300)
    @given(st.floats(0, 1), st.floats(0, 1), st.floats(0.1, 20), st.floats(0, 30))
    def test_delta_sign_follows_offset(self, s, m, delta, loss):
        s, m = min(s, m), max(s, m)
        g = grads_from_pairs(np.array([s]), np.array([m]), np.array([loss]), LilawParams(delta=delta))
        offset = delta * s - m
        assert g.d_delta * offset <= 0.0


class TestBounds:
    def test_million_rows(self):
        rng = np.random.default_rng(99)
        n = 1_000_000
        c = rng.integers(2, 11, n)
        # label prob and max from a random simplex point; width varies per row
        raw = rng.exponential(size=(n, 10))
        raw[np.arange(10)[None, :] >= c[:, None]] = 0.0
        probs = raw / raw.sum(axis=1, keepdims=True)
        y = (rng.random(n) * c).astype(np.int64)
        s = probs[np.arange(n), y]
        m = probs.max(axis=1)
        alpha = rng.uniform(1, 20, n)
        beta = rng.uniform(0.1, 20, n)
        delta = rng.uniform(0.1, 20, n)

        wa = weight_alpha(s, m, alpha)
        wb = weight_beta(s, m, beta)
        wd = weight_delta(s, m, delta)
        sig = 1.0 / (1.0 + np.exp(-(alpha - 1)))
        assert np.all(wa >= sigmoid(-1) - 1e-12)
        assert np.all(wa <= sig + 1e-12)
        big = beta >= 1
        assert np.all(wb[big] >= 1.0 / (1.0 + np.exp(-(1 - beta[big]))) - 1e-12)
        # below beta = 1 the reachable minimum of m - beta*s is (1 - beta)*m > 0, not 1 - beta
        assert np.all(wb[~big] > 0.5)
        assert np.all(wb <= sigmoid(1) + 1e-12)
        assert np.all(wd > 0) and np.all(wd <= 1.0)
        peak = np.abs(delta * s - m) <= 1e-12
        assert np.all(wd[peak] >= 1.0 - 1e-12)
        # exp(-z^2/2) rounds to exactly 1.0 only once z^2/2 is below half an ulp of 1
        assert np.all(np.abs(delta * s - m)[wd == 1.0] < 1.5e-8)

    def test_beta_lower_bound_needs_beta_at_least_one(self):
        assert weight_beta(0.3, 0.3, 0.5) < sigmoid(1 - 0.5)

    def test_kernel_matches_helpers(self, backend, rng):
        rows = random_rows(rng, 500)
        wa, wb, wd, _ = component_weights(rows[:, 0], rows[:, 1], P973)
        np.testing.assert_allclose(wa, weight_alpha(rows[:, 0], rows[:, 1], 9.0), rtol=1e-14)
        np.testing.assert_allclose(wb, weight_beta(rows[:, 0], rows[:, 1], 3.0), rtol=1e-14)
        np.testing.assert_allclose(wd, weight_delta(rows[:, 0], rows[:, 1], 7.0), rtol=1e-14)

    @settings(max_examples=300)
    @given(st.floats(0, 1), st.floats(0, 1), st.floats(1, 20), st.floats(1, 20))
    def test_monotone_in_parameters(self, s, m, lo, hi):
        s, m = min(s, m), max(s, m)
        lo, hi = min(lo, hi), max(lo, hi)
        assert weight_alpha(s, m, lo) <= weight_alpha(s, m, hi)
        assert weight_beta(s, m, lo) >= weight_beta(s, m, hi)


class TestMetaUpdate:
    def test_zero_everything_unchanged(self):
        p = LilawParams(wd_alpha=0, wd_beta=0, wd_delta=0)
        assert meta_update(p, LilawGrads()).values == p.values

    def test_decay_arithmetic(self):
        assert meta_update(LilawParams(), LilawGrads()).alpha == pytest.approx(9.999995, abs=1e-12)

    def test_gradient_step(self):
        p = LilawParams(lr_alpha=0.1, lr_beta=0.2, lr_delta=0.3, wd_alpha=0, wd_beta=0, wd_delta=0)
        q = meta_update(p, LilawGrads(1.0, -2.0, 0.5))
        assert q.values == pytest.approx((9.9, 2.4, 5.85))

    def test_alpha_clamped(self):
        p = LilawParams(alpha=1.0, lr_alpha=1.0)
        assert meta_update(p, LilawGrads(d_alpha=5.0)).alpha == 1.0

    def test_disabled_unchanged(self):
        p = LilawParams(enabled=(False, True, False))
        q = meta_update(p, LilawGrads(3.0, -3.0, 3.0))
        assert q.alpha == p.alpha and q.delta == p.delta and q.beta != p.beta

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError):
            meta_update(LilawParams(), LilawGrads(d_alpha=math.nan))

    def test_direction_without_decay(self):
        rng = np.random.default_rng(3)
        p = LilawParams(wd_alpha=0, wd_beta=0, wd_delta=0)
        for _ in range(500):
            probs = rng.dirichlet(np.ones(4), size=16)
            q = meta_update(p, grad_params(probs, rng.integers(0, 4, 16), p))
            assert q.alpha <= p.alpha and q.beta >= p.beta
            p = q

    @pytest.mark.parametrize("field", ["lr_alpha", "wd_beta"])
    def test_negative_hyperparameters_rejected(self, field):
        with pytest.raises(ValueError):
            LilawParams(**{field: -1.0})


class TestBackends:
    def test_equivalent(self, rng):
        try:
            fast = kernels.get_backend("cython")
        except ImportError:
            pytest.skip("compiled kernels not built")
        slow = kernels.get_backend("python")
        rows = random_rows(rng, 2000)
        for mask in [(True, True, True), (True, False, True), (False, True, False)]:
            a = fast.lilaw_terms(rows[:, 0], rows[:, 1], rows[:, 2], 9.0, 3.0, 7.0, *mask)
            b = slow.lilaw_terms(rows[:, 0], rows[:, 1], rows[:, 2], 9.0, 3.0, 7.0, *mask)
            for x, y in zip(a[:4], b[:4]):
                np.testing.assert_allclose(x, y, rtol=1e-13, atol=1e-300)
            np.testing.assert_allclose(a[4:], b[4:], rtol=1e-11)

        logits = rng.normal(size=(64, 5)) * 4
        y = rng.integers(0, 5, 64)
        for gamma in (-1.0, 0.0, 2.0):
            for x, z in zip(fast.softmax_confidence(logits, y, gamma), slow.softmax_confidence(logits, y, gamma)):
                np.testing.assert_allclose(x, z, rtol=1e-13)

    @pytest.mark.parametrize("name", ["python", "cython"])
    def test_label_range_checked(self, name):
        try:
            mod = kernels.get_backend(name)
        except ImportError:
            pytest.skip("compiled kernels not built")
        with pytest.raises(ValueError):
            mod.softmax_confidence(np.zeros((2, 3)), np.array([0, 3]), -1.0)

    def test_unknown_backend(self):
        with pytest.raises(ValueError):
            kernels.get_backend("fortran")
