import math

import numpy as np
import pytest

from gibbscert.model import (
    Architecture,
    LossKind,
    ParamVector,
    empirical_risk,
    forward,
    forward_squared_allones,
    grad,
    init_params,
    loss,
    predict_proba,
    rescale_layer_pair,
    risk_gradient,
)


def finite_difference_gradient(params, X, y, step=1e-5):
    base = params.values
    out = np.empty_like(base)
    for i in range(len(base)):
        plus = base.copy()
        plus[i] += step
        minus = base.copy()
        minus[i] -= step
        r_plus = empirical_risk(ParamVector(params.arch, plus), X, y, LossKind.BOUNDED_CE)
        r_minus = empirical_risk(ParamVector(params.arch, minus), X, y, LossKind.BOUNDED_CE)
        out[i] = (r_plus - r_minus) / (2.0 * step)
    return out


class TestArchitecture:
    def test_param_count(self):
        arch = Architecture((3, 4, 2))
        assert arch.param_count == (4 * 3 + 4) + (2 * 4 + 2)

    def test_rejects_bad_dims(self):
        with pytest.raises(ValueError):
            Architecture((3,))
        with pytest.raises(ValueError):
            Architecture((3, 0, 2))

    def test_param_vector_length_checked(self):
        arch = Architecture((3, 2))
        with pytest.raises(ValueError):
            ParamVector(arch, np.zeros(5))

    def test_param_vector_rejects_nan(self):
        arch = Architecture((3, 2))
        values = np.zeros(arch.param_count)
        values[0] = np.nan
        with pytest.raises(ValueError):
            ParamVector(arch, values)


class TestInit:
    def test_bias_range_narrow_for_wide_fan_in(self):
        arch = Architecture((250, 4))
        pv = init_params(arch, 0)
        _, b = pv.layers()[0]
        limit = 1.0 / math.sqrt(250)
        assert np.all(np.abs(b) <= limit)
        assert np.max(np.abs(b)) > 0.0

    def test_bias_range_for_fan_in_25(self):
        arch = Architecture((25, 50))
        pv = init_params(arch, 1)
        _, b = pv.layers()[0]
        assert np.all(np.abs(b) <= 0.2)
        # With 50 draws the max should approach the 1/5 limit.
        assert np.max(np.abs(b)) > 0.1

    def test_weight_range_is_glorot(self):
        arch = Architecture((30, 20))
        pv = init_params(arch, 2)
        W, _ = pv.layers()[0]
        limit = math.sqrt(6.0 / (30 + 20))
        assert np.all(np.abs(W) <= limit)
        assert np.max(np.abs(W)) > 0.8 * limit

    def test_deterministic_given_seed(self):
        arch = Architecture((5, 7, 3))
        a = init_params(arch, 123)
        b = init_params(arch, 123)
        np.testing.assert_array_equal(a.values, b.values)
        c = init_params(arch, 124)
        assert not np.array_equal(a.values, c.values)


class TestForward:
    def test_zero_params_give_uniform(self):
        arch = Architecture((4, 3))
        pv = ParamVector(arch, np.zeros(arch.param_count))
        out = forward(pv, np.array([1.0, -2.0, 0.5, 3.0]))
        np.testing.assert_allclose(out, np.full(3, 1.0 / 3.0), atol=1e-12)

    def test_output_sums_to_one(self):
        arch = Architecture((6, 8, 4))
        pv = init_params(arch, 3)
        rng = np.random.default_rng(4)
        probs = predict_proba(pv, rng.standard_normal((20, 6)))
        np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-9)
        assert np.all(probs >= 0.0)

    def test_hand_computed_single_layer(self):
        arch = Architecture((2, 2))
        values = np.array([1.0, 2.0, -1.0, 0.5, 0.1, -0.1])  # W rows then biases
        pv = ParamVector(arch, values)
        x = np.array([0.3, -0.7])
        logits = np.array([1.0 * 0.3 + 2.0 * (-0.7) + 0.1,
                           -1.0 * 0.3 + 0.5 * (-0.7) - 0.1])
        expected = np.exp(logits) / np.exp(logits).sum()
        np.testing.assert_allclose(forward(pv, x), expected, atol=1e-12)

    def test_dimension_mismatch(self):
        arch = Architecture((4, 2))
        pv = init_params(arch, 0)
        with pytest.raises(ValueError):
            forward(pv, np.zeros(3))


class TestLoss:
    def test_bounded_ce_at_zero_probability_is_one(self):
        assert loss(LossKind.BOUNDED_CE, np.array([0.0, 1.0]), 0) == pytest.approx(1.0, abs=1e-12)

    def test_bounded_ce_at_full_probability(self):
        # -1/4 ln(e^-4 + (1 - 2 e^-4)), high-precision reference.
        value = loss(LossKind.BOUNDED_CE, np.array([1.0, 0.0]), 0)
        assert value == pytest.approx(0.004621361706471640, abs=1e-14)

    def test_zero_one_correct_prediction(self):
        assert loss(LossKind.ZERO_ONE, np.array([0.1, 0.9]), 1) == 0.0
        assert loss(LossKind.ZERO_ONE, np.array([0.1, 0.9]), 0) == 1.0

    def test_both_losses_bounded_on_random_inputs(self):
        rng = np.random.default_rng(5)
        for _ in range(10_000):
            p = rng.dirichlet(np.ones(3))
            y = int(rng.integers(3))
            for kind in LossKind:
                value = loss(kind, p, y)
                assert 0.0 <= value <= 1.0


class TestEmpiricalRisk:
    def test_single_example_zero_one(self):
        arch = Architecture((2, 2))
        pv = init_params(arch, 6)
        risk = empirical_risk(pv, np.array([[1.0, 2.0]]), np.array([0]), LossKind.ZERO_ONE)
        assert risk in (0.0, 1.0)

    def test_duplication_invariance(self):
        arch = Architecture((3, 2))
        pv = init_params(arch, 7)
        rng = np.random.default_rng(8)
        X = rng.standard_normal((5, 3))
        y = rng.integers(0, 2, 5)
        once = empirical_risk(pv, X, y, LossKind.BOUNDED_CE)
        twice = empirical_risk(pv, np.vstack([X, X]), np.hstack([y, y]), LossKind.BOUNDED_CE)
        assert once == pytest.approx(twice, abs=1e-12)

    def test_hand_computed_mean(self):
        arch = Architecture((2, 2))
        pv = ParamVector(arch, np.array([1.0, 0.0, 0.0, 1.0, 0.0, 0.0]))
        X = np.array([[2.0, 0.0], [0.0, 2.0], [1.0, 1.0]])
        y = np.array([0, 1, 0])
        expected = np.mean([loss(LossKind.BOUNDED_CE, forward(pv, x), int(label))
                            for x, label in zip(X, y)])
        assert empirical_risk(pv, X, y, LossKind.BOUNDED_CE) == pytest.approx(expected, abs=1e-12)

    def test_empty_sample_rejected(self):
        arch = Architecture((2, 2))
        pv = init_params(arch, 9)
        with pytest.raises(ValueError):
            empirical_risk(pv, np.zeros((0, 2)), np.zeros(0, dtype=int), LossKind.ZERO_ONE)


class TestGradient:
    def test_matches_finite_differences_on_random_instances(self):
        rng = np.random.default_rng(10)
        for trial in range(20):
            arch = Architecture((4, 6, 3))
            pv = init_params(arch, 100 + trial)
            X = rng.standard_normal((4, 4))
            y = rng.integers(0, 3, 4)
            analytic = risk_gradient(pv, X, y)
            numeric = finite_difference_gradient(pv, X, y)
            rel = np.linalg.norm(analytic - numeric) / max(np.linalg.norm(numeric), 1e-12)
            assert rel <= 1e-4

    def test_single_example_closed_form_linear(self):
        # One linear layer: d loss / d logits has the softmax form scaled by
        # the bounded-cross-entropy chain factor.
        arch = Architecture((3, 2))
        pv = init_params(arch, 11)
        x = np.array([0.5, -1.0, 2.0])
        y = 1
        probs = forward(pv, x)
        e4 = math.exp(-4.0)
        span = 1.0 - 2.0 * e4
        chain = -0.25 * span / (e4 + span * probs[y])
        dlogits = chain * probs[y] * (np.eye(2)[y] - probs)
        expected = np.concatenate([np.outer(dlogits, x).ravel(), dlogits])
        np.testing.assert_allclose(risk_gradient(pv, x[None, :], np.array([y])),
                                   expected, atol=1e-12)

    def test_symmetric_batch_gives_symmetric_gradient(self):
        arch = Architecture((2, 2))
        pv = ParamVector(arch, np.zeros(arch.param_count))
        X = np.array([[1.0, 0.0], [0.0, 1.0]])
        y = np.array([0, 1])
        g = risk_gradient(pv, X, y)
        W_grad = g[:4].reshape(2, 2)
        # Swapping features and labels together is a symmetry of this batch.
        np.testing.assert_allclose(W_grad, W_grad[::-1, ::-1].copy(), atol=1e-12)

    def test_zero_one_gradient_rejected(self):
        arch = Architecture((2, 2))
        pv = init_params(arch, 12)
        with pytest.raises(ValueError):
            grad(pv, np.array([[1.0, 2.0]]), np.array([0]), LossKind.ZERO_ONE)

    def test_empty_batch_rejected(self):
        arch = Architecture((2, 2))
        pv = init_params(arch, 13)
        with pytest.raises(ValueError):
            risk_gradient(pv, np.zeros((0, 2)), np.zeros(0, dtype=int))


class TestSquaredAllOnes:
    def test_single_layer_all_ones(self):
        arch = Architecture((2, 2))
        values = np.array([1.0, 1.0, 1.0, 1.0, 0.0, 0.0])
        out = forward_squared_allones(ParamVector(arch, values))
        np.testing.assert_allclose(out, [2.0, 2.0], atol=1e-12)

    def test_zero_params_give_zero(self):
        arch = Architecture((3, 4, 2))
        out = forward_squared_allones(ParamVector(arch, np.zeros(arch.param_count)))
        np.testing.assert_allclose(out, 0.0, atol=1e-15)

    def test_scaling_homogeneity_without_biases(self):
        arch = Architecture((3, 4, 2))
        pv = init_params(arch, 14)
        values = pv.values.copy()
        for _, b_sl in arch.layer_slices:
            values[b_sl] = 0.0
        base = forward_squared_allones(ParamVector(arch, values))
        scaled = forward_squared_allones(ParamVector(arch, 3.0 * values))
        np.testing.assert_allclose(scaled, 3.0 ** (2 * arch.n_layers) * base, rtol=1e-10)

    def test_outputs_nonnegative(self):
        arch = Architecture((3, 5, 4, 2))
        pv = init_params(arch, 15)
        assert np.all(forward_squared_allones(pv) >= 0.0)


class TestRescaling:
    def test_predictions_invariant(self):
        arch = Architecture((3, 8, 2))
        pv = init_params(arch, 16)
        scaled = rescale_layer_pair(pv, 0, 2.0)
        rng = np.random.default_rng(17)
        X = rng.standard_normal((50, 3))
        np.testing.assert_allclose(predict_proba(pv, X), predict_proba(scaled, X), atol=1e-9)

    def test_rejects_last_layer(self):
        arch = Architecture((3, 2))
        pv = init_params(arch, 18)
        with pytest.raises(ValueError):
            rescale_layer_pair(pv, 0, 2.0)
        with pytest.raises(ValueError):
            rescale_layer_pair(pv, -1, 2.0)
