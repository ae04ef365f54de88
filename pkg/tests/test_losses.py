import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles as O
from dynkd import losses
from dynkd.controller import EntropyController, Mode, controller_new

LN2 = math.log(2.0)

# frozen high-precision references (mpmath, 40 digits)
SOFTEN_2_0_T2 = (0.7310585786300049, 0.2689414213699951)
CE_LN2 = 0.405465108108164382
KL_T1 = 0.462117157260009759
KL_T2 = 0.489837324807418259
TOTAL_B15 = 1.098640843998179020
KL_PAPER_10 = -0.0908577476729484
CE_GRAD_LN2 = -0.231049060186648436


def test_frozen_values_match_oracle():
    assert float(O.softmax([2, 0], mp.mpf(1) / 2)[0]) == pytest.approx(SOFTEN_2_0_T2[0], abs=1e-16)
    assert float(O.ce([mp.log(2), 0], 0)) == pytest.approx(CE_LN2, abs=1e-16)
    assert float(O.kl([0, 1], [1, 0], 1)) == pytest.approx(KL_T1, abs=1e-16)
    assert float(O.kl([0, 1], [1, 0], 2)) == pytest.approx(KL_T2, abs=1e-16)
    assert float(O.paper_kl_deriv([1, 0], [1, 0], 1, 1)) == pytest.approx(KL_PAPER_10, abs=1e-15)
    # hand forms: (e-1)/(e+1) and 2 tanh(1/4)
    assert KL_T1 == pytest.approx(math.tanh(0.5), abs=1e-15)
    assert KL_T2 == pytest.approx(2 * math.tanh(0.25), abs=1e-15)


class TestSoften:
    def test_symmetric(self):
        np.testing.assert_allclose(losses.soften([0.0, 0.0]), [0.5, 0.5], atol=1e-15)

    def test_ln2(self):
        np.testing.assert_allclose(losses.soften([LN2, 0.0]), [2 / 3, 1 / 3], atol=1e-15)

    def test_temperature(self):
        np.testing.assert_allclose(losses.soften([2.0, 0.0], 2.0), SOFTEN_2_0_T2, atol=1e-15)

    def test_alpha_and_temperature_combine(self, rng):
        z = rng.normal(size=6)
        np.testing.assert_allclose(losses.soften(z, 2.0, 3.0), losses.soften(z * 1.5), atol=1e-15)

    def test_huge_logits_stable(self):
        p = losses.soften([1000.0, 0.0, -1000.0])
        assert np.isfinite(p).all() and p[0] == 1.0

    def test_batch_rows_sum_to_one(self, rng):
        p = losses.soften(rng.normal(0, 3, (5, 7)), 4.0, 0.3)
        np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-15)

    @pytest.mark.parametrize("T,a", [(0.0, 1.0), (1.0, 0.0), (-1.0, 1.0), (1.0, -2.0)])
    def test_rejects_nonpositive_scales(self, T, a):
        with pytest.raises(ValueError):
            losses.soften([1.0, 0.0], T, a)

    @pytest.mark.parametrize("z", [[1.0], [np.nan, 0.0], [np.inf, 0.0]])
    def test_rejects_bad_logits(self, z):
        with pytest.raises(ValueError):
            losses.soften(z)


class TestCrossEntropy:
    def test_uniform(self):
        for k in range(4):
            assert losses.cross_entropy_loss([0.0] * 4, k) == pytest.approx(math.log(4), abs=1e-12)

    def test_saturated(self):
        assert losses.cross_entropy_loss([1000.0, 0.0], 0) <= 1e-9

    def test_ln2(self):
        assert losses.cross_entropy_loss([LN2, 0.0], 0) == pytest.approx(CE_LN2, abs=1e-15)

    def test_no_temperature_in_ce(self, rng):
        z = rng.normal(size=5)
        assert losses.cross_entropy_loss(z, 2, 0.5) == pytest.approx(float(O.ce(z, 2, 0.5)), rel=1e-13)

    def test_label_checks(self):
        with pytest.raises(ValueError):
            losses.cross_entropy_loss([0.0, 1.0], 2)
        with pytest.raises(ValueError):
            losses.cross_entropy_loss([0.0, 1.0], -1)
        with pytest.raises(ValueError):
            losses.cross_entropy_loss([0.0, 1.0], 0.5)

    def test_batch(self, rng):
        z = rng.normal(size=(4, 3))
        k = np.array([0, 2, 1, 1])
        out = losses.cross_entropy_loss(z, k)
        assert out.shape == (4,)
        for i in range(4):
            assert out[i] == pytest.approx(float(O.ce(z[i], k[i])), rel=1e-13)


class TestKL:
    @pytest.mark.parametrize("T", [0.5, 1.0, 4.0])
    def test_identical_is_zero(self, rng, T):
        z = rng.normal(0, 3, 10)
        assert losses.kl_loss(z, z, T) <= 1e-12

    def test_values(self):
        assert losses.kl_loss([0.0, 1.0], [1.0, 0.0], 1.0) == pytest.approx(KL_T1, abs=1e-15)
        assert losses.kl_loss([0.0, 1.0], [1.0, 0.0], 2.0) == pytest.approx(KL_T2, abs=1e-15)

    def test_alpha_scales_student_only(self, rng):
        zs, zt = rng.normal(size=6), rng.normal(size=6)
        got = losses.kl_loss(zs, zt, 2.0, 1.7)
        assert got == pytest.approx(float(O.kl(zs, zt, 2, 1.7)), rel=1e-12)
        assert got == pytest.approx(losses.kl_loss(1.7 * zs, zt, 2.0), rel=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            losses.kl_loss([0.0, 1.0], [0.0, 1.0, 2.0], 1.0)

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.floats(-20, 20), min_size=2, max_size=8), st.floats(0.2, 8), st.floats(0.05, 20))
    def test_nonnegative(self, z, T, a):
        zs = np.array(z)
        zt = zs[::-1].copy()
        assert losses.kl_loss(zs, zt, T, a) >= 0.0


class TestTotal:
    def test_sum(self):
        br = losses.total_loss([0.0, 1.0], [1.0, 0.0], [0], 1.0, 1.0)
        assert br.total == br.beta * br.loss_kl + br.loss_ce
        assert br.loss_kl == pytest.approx(KL_T1, abs=1e-15)
        # the rounded components of the two worked examples, combined with beta = 1
        assert 1.0 * 0.4622 + 0.4055 == pytest.approx(0.8677, abs=1e-12)
        assert KL_T1 + CE_LN2 == pytest.approx(0.8677, abs=2e-4)

    def test_beta_weight(self):
        # KL from the [0,1] vs [1,0] example and CE from the [ln 2, 0] example
        kl = losses.kl_loss([0.0, 1.0], [1.0, 0.0], 1.0)
        ce = losses.cross_entropy_loss([LN2, 0.0], 0)
        assert 1.5 * kl + ce == pytest.approx(TOTAL_B15, abs=1e-15)
        assert float(1.5 * O.kl([0, 1], [1, 0], 1) + O.ce([mp.log(2), 0], 0)) == pytest.approx(TOTAL_B15, abs=1e-15)

    def test_beta_zero_is_ce_exactly(self, rng):
        zs, zt = rng.normal(size=(5, 4)), rng.normal(size=(5, 4))
        k = rng.integers(0, 4, 5)
        br = losses.total_loss(zs, zt, k, 4.0, 0.0)
        assert br.total == br.loss_ce
        assert br.loss_ce == float(losses.cross_entropy_loss(zs, k).mean())

    def test_rejects_negative_beta(self):
        with pytest.raises(ValueError):
            losses.total_loss([0.0, 1.0], [1.0, 0.0], [0], 1.0, -1.0)


class TestEntropy:
    def test_uniform(self):
        for a in (0.1, 1.0, 30.0):
            assert losses.output_entropy([0.0] * 4, 1.0, a) == pytest.approx(math.log(4), abs=1e-15)

    def test_one_hot_limit(self):
        assert losses.output_entropy([1.0, 2.0, 3.0], 1.0, 100.0) <= 1e-6

    def test_sharper_with_alpha(self):
        lo, hi = losses.output_entropy([1.0, 0.0], 1.0, 0.5), losses.output_entropy([1.0, 0.0], 1.0, 2.0)
        assert lo == pytest.approx(0.662847318579179399, abs=1e-15)
        assert hi == pytest.approx(0.365333855087207608, abs=1e-15)
        assert lo > hi

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.floats(-10, 10), min_size=2, max_size=10), st.floats(0.05, 10), st.floats(1.01, 3))
    def test_bounded_and_decreasing(self, z, a, factor):
        z = np.array(z)
        h = losses.output_entropy(z, 1.0, a)
        assert -1e-12 <= h <= math.log(len(z)) + 1e-12
        assert losses.output_entropy(z, 1.0, a * factor) <= h + 1e-12


class TestWeightedMean:
    def test_matches_oracle(self, rng):
        z = rng.normal(0, 2, 7)
        assert losses.weighted_mean(z, 2.0, 0.8) == pytest.approx(float(O.wmean(z, 2, 0.8)), rel=1e-13)

    def test_slope_is_derivative(self, rng):
        for _ in range(10):
            z = rng.normal(0, 2, 5)
            T, a = rng.choice([1.0, 2.0, 4.0]), rng.uniform(0.2, 5)
            fd = O.central(lambda x: O.wmean(z, T, x), a)
            assert float(O.rel_err(losses.weighted_mean_slope(z, T, a), fd)) <= 1e-8

    def test_degenerate(self):
        assert losses.is_degenerate([1.0, 1.0, 1.0])
        assert not losses.is_degenerate([1.0, 1.0, 1.5])
        np.testing.assert_array_equal(losses.is_degenerate([[0.0, 0.0], [0.0, 1.0]]), [True, False])


class TestAlphaGradients:
    def test_kl_true_zero_at_match(self, rng):
        z = rng.normal(0, 2, 6)
        for T in (1.0, 2.0, 4.0):
            assert abs(losses.grad_alpha_kl_true(z, z, T, 1.0)) <= 1e-9

    def test_kl_true_fd(self, rng):
        for i in range(20):
            m = int(rng.choice([3, 10]))
            zs, zt = rng.normal(0, 2, m), rng.normal(0, 2, m)
            T, a = float(rng.choice([1.0, 2.0, 4.0])), float(rng.uniform(0.1, 10))
            fd = O.central(lambda x: O.kl(zs, zt, T, x), a)
            assert float(O.rel_err(losses.grad_alpha_kl_true(zs, zt, T, a), fd)) <= 1e-5

    def test_kl_true_positive_at_large_alpha(self, rng):
        for _ in range(10):
            zs, zt = rng.normal(0, 2, 5), rng.normal(0, 2, 5)
            assert losses.grad_alpha_kl_true(zs, zt, 2.0, 1e4) > 0

    def test_kl_paper_value(self):
        assert losses.grad_alpha_kl_paper([1.0, 0.0], [1.0, 0.0], 1.0, 1.0) == pytest.approx(KL_PAPER_10, abs=1e-15)

    def test_kl_paper_matches_oracle_and_sign(self, rng):
        for _ in range(10):
            zs, zt = rng.normal(0, 2, 6), rng.normal(0, 2, 6)
            a = float(rng.uniform(0.1, 10))
            got = losses.grad_alpha_kl_paper(zs, zt, 2.0, a)
            assert got == pytest.approx(float(O.paper_kl_deriv(zs, zt, 2, a)), rel=1e-10, abs=1e-14)
            assert losses.grad_alpha_kl_paper(zs, zt, 2.0, 1e4) > 0
            assert losses.grad_alpha_kl_paper(zs, zt, 2.0, 2.0) > losses.grad_alpha_kl_paper(zs, zt, 2.0, 0.5)

    def test_kl_paper_differs_from_true(self):
        zs, zt = [2.0, 0.0, -1.0], [0.0, 1.0, 0.5]
        assert losses.grad_alpha_kl_paper(zs, zt, 1.0) != pytest.approx(losses.grad_alpha_kl_true(zs, zt, 1.0))

    def test_ce_value(self):
        assert losses.grad_alpha_ce([LN2, 0.0], 0, 1.0) == pytest.approx(CE_GRAD_LN2, abs=1e-15)

    def test_ce_limit_from_below(self, rng):
        z = rng.normal(0, 2, 6)
        g = losses.grad_alpha_ce(z, int(np.argmax(z)), 1e6)
        assert g <= 0 and g == pytest.approx(0.0, abs=1e-12)

    def test_ce_fd(self, rng):
        for _ in range(20):
            m = int(rng.choice([3, 10, 50]))
            z, k, a = rng.normal(0, 2, m), int(rng.integers(m)), float(rng.uniform(0.1, 10))
            fd = O.central(lambda x: O.ce(z, k, x), a)
            assert float(O.rel_err(losses.grad_alpha_ce(z, k, a), fd)) <= 1e-5

    def test_broadcast_alpha(self, rng):
        zs, zt = rng.normal(size=(3, 4)), rng.normal(size=(3, 4))
        alphas = np.array([0.5, 1.0, 2.0])[:, None]
        out = losses.grad_alpha_kl_true(zs, zt, 2.0, alphas[..., None])
        assert out.shape == (3, 3)
        for i, a in enumerate(alphas[:, 0]):
            np.testing.assert_allclose(out[i], losses.grad_alpha_kl_true(zs, zt, 2.0, a), rtol=1e-14)


class TestGradLogits:
    def test_matched_kl_part_is_zero(self, rng):
        z = rng.normal(0, 2, (1, 5))
        k = [int(np.argmax(z))]
        ce_only, _ = losses.grad_logits(z, z, k, 1.0, 0.0)
        with_kl, _ = losses.grad_logits(z, z, k, 1.0, 3.7)
        assert np.array_equal(ce_only, with_kl)

    def test_beta_zero_is_ce_gradient(self, rng):
        z, zt = rng.normal(size=(4, 3)), rng.normal(size=(4, 3))
        k = np.array([0, 1, 2, 0])
        c = controller_new("shared", 1.3)
        dz, _ = losses.grad_logits(z, zt, k, 4.0, 0.0, c)
        p = losses.soften(z, 1.0, 1.3)
        np.testing.assert_allclose(dz, 1.3 * (p - np.eye(3)[k]) / 4, atol=1e-16)

    @pytest.mark.parametrize("mode", ["none", "shared", "kl_only", "ce_only", "full", "static", "compensated"])
    def test_fd_every_coordinate(self, rng, mode):
        for _ in range(6):
            m = int(rng.choice([3, 10]))
            zs, zt = rng.normal(0, 2, m), rng.normal(0, 2, m)
            k, T, beta = int(rng.integers(m)), float(rng.choice([1.0, 2.0, 4.0])), float(rng.uniform(0, 2))
            c = controller_new(mode, float(rng.uniform(0.2, 5)), (1e-3, 1e2), T)
            if mode == "full":
                c.alpha_ce = float(rng.uniform(0.2, 5))
            br, dz, _, path = losses.distill_objective(zs, zt, k, T, beta, c, 0.7)
            fd = O.objective_logit_fd(zs, zt, k, T, beta, path.alpha_kl, path.alpha_ce, br.scale)
            for g, f in zip(dz[0], fd):
                assert float(O.rel_err(g, f)) <= 1e-5


class TestControllerGradients:
    """d total / d controller field against extended-precision central differences."""

    def _instance(self, rng, m=6):
        return rng.normal(0, 2, m), rng.normal(0, 2, m), int(rng.integers(m))

    def test_shared(self, rng):
        zs, zt, k = self._instance(rng)
        c = controller_new("shared", 0.8)
        _, _, g, _ = losses.distill_objective(zs, zt, k, 4.0, 1.5, c)
        fd = O.central(lambda a: O.sample_objective(zs, zt, k, 4, 1.5, a, a), 0.8)
        assert float(O.rel_err(g["alpha"], fd)) <= 1e-8

    def test_kl_only_and_ce_only(self, rng):
        zs, zt, k = self._instance(rng)
        g_kl = losses.distill_objective(zs, zt, k, 2.0, 1.0, controller_new("kl_only", 1.4))[2]["alpha"]
        g_ce = losses.distill_objective(zs, zt, k, 2.0, 1.0, controller_new("ce_only", 1.4))[2]["alpha"]
        fd_kl = O.central(lambda a: O.sample_objective(zs, zt, k, 2, 1, a, 1), 1.4)
        fd_ce = O.central(lambda a: O.sample_objective(zs, zt, k, 2, 1, 1, a), 1.4)
        assert float(O.rel_err(g_kl, fd_kl)) <= 1e-8
        assert float(O.rel_err(g_ce, fd_ce)) <= 1e-8

    def test_full(self, rng):
        zs, zt, k = self._instance(rng)
        c = controller_new("full")
        c.alpha_kl, c.alpha_ce = 0.6, 2.2
        g = losses.distill_objective(zs, zt, k, 4.0, 1.0, c)[2]
        fd_kl = O.central(lambda a: O.sample_objective(zs, zt, k, 4, 1, a, 2.2), 0.6)
        fd_ce = O.central(lambda a: O.sample_objective(zs, zt, k, 4, 1, 0.6, a), 2.2)
        assert float(O.rel_err(g["alpha_kl"], fd_kl)) <= 1e-8
        assert float(O.rel_err(g["alpha_ce"], fd_ce)) <= 1e-8

    def test_teacher(self, rng):
        zs, zt, k = self._instance(rng)
        c = controller_new("teacher", 1.7)
        g = losses.distill_objective(zs, zt, k, 4.0, 1.2, c)[2]
        fd = O.central(lambda a: O.sample_objective(zs, zt, k, 4, 1.2, a_t=a), 1.7)
        assert float(O.rel_err(g["alpha"], fd)) <= 1e-8

    def test_learn_t(self, rng):
        zs, zt, k = self._instance(rng)
        c = controller_new("learn_t", 1.0, (1e-3, 1e2), 3.0)
        br, _, g, path = losses.distill_objective(zs, zt, k, 4.0, 1.0, c)
        assert path.temperature == 3.0
        assert br.loss_kl == pytest.approx(losses.kl_loss(zs, zt, 3.0), rel=1e-14)
        fd = O.central(lambda t: O.sample_objective(zs, zt, k, 4, 1, t_kl=t), 3.0)
        assert float(O.rel_err(g["t_learn"], fd)) <= 1e-8

    def test_compensated(self, rng):
        zs, zt, k = self._instance(rng)
        c = controller_new("compensated", 1.3)
        br, _, g, _ = losses.distill_objective(zs, zt, k, 4.0, 1.0, c)
        raw = float(O.sample_objective(zs, zt, k, 4, 1, 1.3, 1.3))
        assert br.total == pytest.approx(raw / 1.3**2, rel=1e-12)
        fd = O.central(lambda a: O.sample_objective(zs, zt, k, 4, 1, a, a, scale=1 / a**2), 1.3)
        assert float(O.rel_err(g["alpha"], fd)) <= 1e-8

    def test_static_and_none_have_no_gradient(self, rng):
        zs, zt, k = self._instance(rng)
        assert losses.distill_objective(zs, zt, k, 4.0, 1.0, controller_new("static"))[2] == {}
        assert losses.distill_objective(zs, zt, k, 4.0, 1.0, controller_new("none"))[2] == {}

    def test_batch_mean(self, rng):
        zs, zt = rng.normal(size=(5, 4)), rng.normal(size=(5, 4))
        k = rng.integers(0, 4, 5)
        c = controller_new("shared", 0.9)
        g = losses.distill_objective(zs, zt, k, 2.0, 1.0, c)[2]["alpha"]
        per = [losses.distill_objective(zs[i], zt[i], k[i], 2.0, 1.0, c)[2]["alpha"] for i in range(5)]
        assert g == pytest.approx(np.mean(per), rel=1e-13)


def test_none_equals_frozen_shared(rng):
    zs, zt = rng.normal(size=(8, 5)), rng.normal(size=(8, 5))
    k = rng.integers(0, 5, 8)
    a = losses.distill_objective(zs, zt, k, 4.0, 1.0, controller_new("none"))
    b = losses.distill_objective(zs, zt, k, 4.0, 1.0, controller_new("shared", 1.0))
    assert abs(a[0].total - b[0].total) <= 1e-12
    assert np.max(np.abs(a[1] - b[1])) <= 1e-12


def test_default_controller_is_plain_kd(rng):
    zs, zt = rng.normal(size=(3, 4)), rng.normal(size=(3, 4))
    k = rng.integers(0, 4, 3)
    br = losses.total_loss(zs, zt, k, 4.0, 1.0)
    plain = np.mean([float(O.kl(zs[i], zt[i], 4)) for i in range(3)])
    ce = np.mean([float(O.ce(zs[i], k[i])) for i in range(3)])
    assert br.total == pytest.approx(plain + ce, rel=1e-13)


def test_ce_objective(rng):
    z = rng.normal(size=(4, 3))
    y = np.array([2, 0, 1, 1])
    loss, dz = losses.ce_objective(z, y)
    assert loss == pytest.approx(np.mean([float(O.ce(z[i], y[i])) for i in range(4)]), rel=1e-13)
    np.testing.assert_allclose(dz, (losses.soften(z) - np.eye(3)[y]) / 4, atol=1e-16)


def test_alpha_sweep_matches_per_op(rng):
    zs = rng.normal(0, 3, (9, 6))
    zt = rng.normal(0, 3, (9, 6))
    k = rng.integers(0, 6, 9)
    alphas = np.array([1e-3, 0.05, 0.7, 1.0, 3.0, 40.0, 900.0])
    for T in (1.0, 4.0):
        out = losses.alpha_sweep(zs, zt, k, T, alphas)
        assert out.shape == (5, len(alphas), 9)
        for i, a in enumerate(alphas):
            ref = [
                losses.kl_loss(zs, zt, T, a),
                losses.cross_entropy_loss(zs, k, a),
                losses.grad_alpha_kl_true(zs, zt, T, a),
                losses.grad_alpha_kl_paper(zs, zt, T, a),
                losses.grad_alpha_ce(zs, k, a),
            ]
            for row, r in zip(out[:, i], ref):
                np.testing.assert_allclose(row, r, rtol=1e-10, atol=1e-10)
