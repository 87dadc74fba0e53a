import numpy as np
import pytest

from gibbscert.data import Dataset, DataSplit
from gibbscert.measures import (
    MuFamily,
    MuSpec,
    NormKind,
    OmegaFamily,
    OmegaSpec,
    mu_gradient,
    mu_value,
    norm_gradient,
    norm_value,
    omega_value,
)
from gibbscert.model import (
    Architecture,
    LossKind,
    ParamVector,
    empirical_risk,
    init_params,
    rescale_layer_pair,
)


@pytest.fixture
def small_data():
    rng = np.random.default_rng(0)
    sample = Dataset(rng.standard_normal((12, 3)), rng.integers(0, 2, 12), 2)
    test = Dataset(rng.standard_normal((9, 3)), rng.integers(0, 2, 9), 2)
    return sample, test


def make_net(seed=0, dims=(3, 4, 2)):
    arch = Architecture(dims)
    return init_params(arch, seed)


def numeric_gradient(fn, values, step=1e-6):
    out = np.empty_like(values)
    for i in range(len(values)):
        plus = values.copy()
        plus[i] += step
        minus = values.copy()
        minus[i] -= step
        out[i] = (fn(plus) - fn(minus)) / (2.0 * step)
    return out


class TestNormValues:
    def test_dist_l2_zero_at_init(self):
        pv = make_net(1)
        assert norm_value(NormKind.DIST_L2, pv, pv) == 0.0

    def test_dist_fro_zero_at_init(self):
        pv = make_net(2)
        assert norm_value(NormKind.DIST_FRO, pv, pv) == 0.0

    def test_par_norm_hand_value(self):
        arch = Architecture((2, 1))
        pv = ParamVector(arch, np.array([3.0, 4.0, 0.0]))
        assert norm_value(NormKind.PAR_NORM, pv) == pytest.approx(25.0)

    def test_sum_fro_reduces_to_par_norm_for_one_layer(self):
        arch = Architecture((2, 1))
        pv = ParamVector(arch, np.array([3.0, 4.0, 0.0]))
        assert norm_value(NormKind.SUM_FRO, pv) == pytest.approx(25.0)

    def test_dist_fro_equals_dist_l2_for_single_layer(self):
        arch = Architecture((4, 3))
        a = init_params(arch, 3)
        b = init_params(arch, 4)
        assert norm_value(NormKind.DIST_FRO, a, b) == pytest.approx(
            norm_value(NormKind.DIST_L2, a, b), abs=1e-12)

    def test_path_norm_matches_squared_forward(self):
        pv = make_net(5)
        from gibbscert.model import forward_squared_allones

        assert norm_value(NormKind.PATH_NORM, pv) == pytest.approx(
            float(forward_squared_allones(pv).sum()))

    def test_gap_value(self, small_data):
        sample, test = small_data
        pv = make_net(6)
        r_s = empirical_risk(pv, sample.X, sample.y, LossKind.BOUNDED_CE)
        r_t = empirical_risk(pv, test.X, test.y, LossKind.BOUNDED_CE)
        assert norm_value(NormKind.GAP, pv, sample=sample, test=test) == pytest.approx(
            abs(r_t - r_s))

    def test_gap_needs_test(self, small_data):
        sample, _ = small_data
        with pytest.raises(ValueError):
            norm_value(NormKind.GAP, make_net(7), sample=sample, test=None)

    def test_all_norms_nonnegative(self, small_data):
        sample, test = small_data
        pv = make_net(8)
        ref = make_net(9)
        for kind in NormKind:
            value = norm_value(kind, pv, ref, sample=sample, test=test)
            assert value >= 0.0

    def test_layout_mismatch_rejected(self):
        a = make_net(10, dims=(3, 4, 2))
        b = make_net(11, dims=(3, 5, 2))
        with pytest.raises(ValueError):
            norm_value(NormKind.DIST_L2, a, b)


class TestNormGradients:
    @pytest.mark.parametrize("kind", [NormKind.DIST_FRO, NormKind.DIST_L2,
                                      NormKind.PAR_NORM, NormKind.PATH_NORM,
                                      NormKind.SUM_FRO])
    def test_matches_finite_differences(self, kind):
        pv = make_net(12)
        ref = make_net(13)
        arch = pv.arch

        def fn(values):
            return norm_value(kind, ParamVector(arch, values), ref)

        analytic = norm_gradient(kind, pv, ref)
        numeric = numeric_gradient(fn, pv.values)
        np.testing.assert_allclose(analytic, numeric, rtol=1e-5, atol=1e-7)

    def test_gap_gradient_matches_finite_differences(self, small_data):
        sample, test = small_data
        pv = make_net(14)
        arch = pv.arch

        def fn(values):
            return norm_value(NormKind.GAP, ParamVector(arch, values),
                              sample=sample, test=test)

        analytic = norm_gradient(NormKind.GAP, pv, sample=sample, test=test)
        numeric = numeric_gradient(fn, pv.values)
        np.testing.assert_allclose(analytic, numeric, rtol=1e-4, atol=1e-8)

    def test_subgradient_zero_at_origin(self):
        pv = make_net(15)
        np.testing.assert_array_equal(norm_gradient(NormKind.DIST_L2, pv, pv), 0.0)
        zero = ParamVector(pv.arch, np.zeros(pv.arch.param_count))
        np.testing.assert_array_equal(norm_gradient(NormKind.SUM_FRO, zero), 0.0)


class TestMuValue:
    def test_zero_alpha_gives_zero(self, small_data):
        sample, _ = small_data
        spec = MuSpec(MuFamily.EMP_RISK, alpha=0.0)
        assert mu_value(spec, make_net(16), sample=sample) == 0.0

    def test_beta_one_reduces_to_emp_risk(self, small_data):
        sample, _ = small_data
        pv = make_net(17)
        reg = MuSpec(MuFamily.REGULARIZED, alpha=7.0, norm=NormKind.PAR_NORM, beta=1.0)
        emp = MuSpec(MuFamily.EMP_RISK, alpha=7.0)
        assert mu_value(reg, pv, sample=sample) == pytest.approx(
            mu_value(emp, pv, sample=sample), abs=1e-12)

    def test_distance_to_self_is_zero(self, small_data):
        sample, _ = small_data
        pv = make_net(18)
        spec = MuSpec(MuFamily.DISTANCE_TO_REF, alpha=5.0, norm=NormKind.PAR_NORM,
                      sgd_ref=pv)
        assert mu_value(spec, pv, sample=sample) == 0.0

    def test_regularized_is_affine_in_pieces(self, small_data):
        sample, _ = small_data
        pv = make_net(19)
        ref = make_net(20)
        alpha, beta = 11.0, 0.3
        spec = MuSpec(MuFamily.REGULARIZED, alpha=alpha, norm=NormKind.DIST_FRO,
                      beta=beta, init_ref=ref)
        risk = empirical_risk(pv, sample.X, sample.y, LossKind.BOUNDED_CE)
        reg = norm_value(NormKind.DIST_FRO, pv, ref)
        assert mu_value(spec, pv, sample=sample) == pytest.approx(
            alpha * (beta * risk + (1 - beta) * reg), abs=1e-12)

    def test_gradient_matches_finite_differences(self, small_data):
        sample, test = small_data
        ref = make_net(21)
        pv = make_net(22)
        arch = pv.arch
        specs = [
            MuSpec(MuFamily.EMP_RISK, alpha=3.0),
            MuSpec(MuFamily.REGULARIZED, alpha=3.0, norm=NormKind.PATH_NORM, beta=0.4),
            MuSpec(MuFamily.REGULARIZED, alpha=2.0, norm=NormKind.DIST_L2, beta=0.7,
                   init_ref=ref),
            MuSpec(MuFamily.DISTANCE_TO_REF, alpha=4.0, norm=NormKind.PAR_NORM,
                   sgd_ref=ref),
        ]
        for spec in specs:
            def fn(values, _spec=spec):
                return mu_value(_spec, ParamVector(arch, values), sample=sample, test=test)

            analytic = mu_gradient(spec, pv, sample=sample, test=test)
            numeric = numeric_gradient(fn, pv.values)
            np.testing.assert_allclose(analytic, numeric, rtol=1e-4, atol=1e-7)

    def test_validation(self):
        with pytest.raises(ValueError):
            MuSpec(MuFamily.REGULARIZED, alpha=1.0, norm=NormKind.PAR_NORM)  # no beta
        with pytest.raises(ValueError):
            MuSpec(MuFamily.EMP_RISK, alpha=1.0, beta=0.5)  # stray beta
        with pytest.raises(ValueError):
            MuSpec(MuFamily.DISTANCE_TO_REF, alpha=1.0, norm=NormKind.PAR_NORM)  # no ref
        with pytest.raises(ValueError):
            MuSpec(MuFamily.NEURAL, alpha=1.0)  # no predictor


class TestOmega:
    def test_uniform_is_zero(self, small_data):
        sample, test = small_data
        split = DataSplit(sample, sample, test, 0.5)
        assert omega_value(OmegaSpec(OmegaFamily.UNIFORM), make_net(23), split=split) == 0.0

    def test_scaled_risk_zero_alpha(self, small_data):
        sample, test = small_data
        split = DataSplit(sample, sample, test, 0.5)
        spec = OmegaSpec(OmegaFamily.SCALED_RISK, alpha_prime=0.0)
        assert omega_value(spec, make_net(24), split=split) == 0.0

    def test_gibbs_on_prior_sample_hand_value(self):
        rng = np.random.default_rng(25)
        prior_sample = Dataset(rng.standard_normal((3, 2)), np.array([0, 1, 0]), 2)
        learn = Dataset(rng.standard_normal((4, 2)), np.array([0, 1, 1, 0]), 2)
        empty = Dataset(np.zeros((0, 2)), np.zeros(0, dtype=int), 2)
        split = DataSplit(learn, prior_sample, empty, 0.5)
        pv = make_net(26, dims=(2, 2))
        alpha = 9.0
        spec = OmegaSpec(OmegaFamily.GIBBS_ON_PRIOR_SAMPLE,
                         mu=MuSpec(MuFamily.EMP_RISK, alpha=alpha))
        expected = alpha * empirical_risk(pv, prior_sample.X, prior_sample.y,
                                          LossKind.BOUNDED_CE)
        assert omega_value(spec, pv, split=split) == pytest.approx(expected, abs=1e-12)

    def test_gibbs_on_empty_prior_sample_rejected(self, small_data):
        sample, test = small_data
        empty = Dataset(np.zeros((0, 3)), np.zeros(0, dtype=int), 2)
        split = DataSplit(sample, empty, test, 0.0)
        spec = OmegaSpec(OmegaFamily.GIBBS_ON_PRIOR_SAMPLE,
                         mu=MuSpec(MuFamily.EMP_RISK, alpha=1.0))
        with pytest.raises(ValueError):
            omega_value(spec, make_net(27), split=split)


class TestRescalingContrast:
    def test_path_norm_invariant_par_norm_not(self):
        arch = Architecture((3, 8, 2))
        pv = init_params(arch, 28)
        scaled = rescale_layer_pair(pv, 0, 2.0)
        path_before = norm_value(NormKind.PATH_NORM, pv)
        path_after = norm_value(NormKind.PATH_NORM, scaled)
        assert path_after == pytest.approx(path_before, rel=1e-9)
        par_before = norm_value(NormKind.PAR_NORM, pv)
        par_after = norm_value(NormKind.PAR_NORM, scaled)
        assert abs(par_after - par_before) > 0.1 * par_before

    def test_gap_invariant_under_rescaling(self):
        rng = np.random.default_rng(29)
        sample = Dataset(rng.standard_normal((10, 3)), rng.integers(0, 2, 10), 2)
        test = Dataset(rng.standard_normal((10, 3)), rng.integers(0, 2, 10), 2)
        arch = Architecture((3, 8, 2))
        pv = init_params(arch, 30)
        scaled = rescale_layer_pair(pv, 0, 2.0)
        g0 = norm_value(NormKind.GAP, pv, sample=sample, test=test)
        g1 = norm_value(NormKind.GAP, scaled, sample=sample, test=test)
        assert g1 == pytest.approx(g0, abs=1e-9)
