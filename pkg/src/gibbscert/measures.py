"""Registry of parametric complexity functions and prior functions.

A parametric function mu maps (hypothesis, sample) to a real number and
shapes the Gibbs posterior exp(-mu); omega plays the same role for the
prior.  Families: a scaled empirical risk, six regularized norms, distances
to a reference hypothesis, and a learned gap predictor.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .data import Dataset
from .model import (
    LossKind,
    ParamVector,
    empirical_risk,
    forward_squared_allones,
    risk_gradient,
    squared_allones_output_gradient,
)


class NormKind(Enum):
    DIST_FRO = "dist_fro"
    DIST_L2 = "dist_l2"
    PAR_NORM = "par_norm"
    PATH_NORM = "path_norm"
    SUM_FRO = "sum_fro"
    GAP = "gap"


class MuFamily(Enum):
    EMP_RISK = "emp_risk"
    REGULARIZED = "regularized"
    DISTANCE_TO_REF = "distance_to_ref"
    NEURAL = "neural"


class OmegaFamily(Enum):
    UNIFORM = "uniform"
    GIBBS_ON_PRIOR_SAMPLE = "gibbs_on_prior_sample"
    SCALED_RISK = "scaled_risk"


@dataclass
class MuSpec:
    """Declarative description of one parametric function.

    alpha is the concentration of the Gibbs posterior.  beta trades risk
    against norm for the regularized family (beta = 1 recovers the scaled
    empirical risk).  init_ref is the initialization reference used by the
    distance norms; sgd_ref is the trained reference of the distance family;
    predictor is any object with predict(w) and input_gradient(w).
    """

    family: MuFamily
    alpha: float
    norm: NormKind | None = None
    beta: float | None = None
    init_ref: ParamVector | None = None
    sgd_ref: ParamVector | None = None
    predictor: object | None = None

    def __post_init__(self) -> None:
        if self.alpha < 0.0:
            raise ValueError(f"alpha must be nonnegative, got {self.alpha}")
        if self.family is MuFamily.REGULARIZED:
            if self.beta is None or not 0.0 <= self.beta <= 1.0:
                raise ValueError("regularized family needs beta in [0, 1]")
            if self.norm is None:
                raise ValueError("regularized family needs a norm kind")
        elif self.beta is not None:
            raise ValueError("beta is only meaningful for the regularized family")
        if self.family is MuFamily.DISTANCE_TO_REF:
            if self.sgd_ref is None:
                raise ValueError("distance family needs the trained reference hypothesis")
            if self.norm is None and self.predictor is None:
                raise ValueError("distance family needs a norm kind or a predictor")
        if self.family is MuFamily.NEURAL and self.predictor is None:
            raise ValueError("neural family needs a trained predictor")
        needs_init = self.norm in (NormKind.DIST_FRO, NormKind.DIST_L2)
        if needs_init and self.init_ref is None:
            raise ValueError(f"{self.norm.value} needs the initialization reference")


@dataclass
class OmegaSpec:
    family: OmegaFamily
    mu: MuSpec | None = None
    alpha_prime: float = 0.0

    def __post_init__(self) -> None:
        if self.family is OmegaFamily.GIBBS_ON_PRIOR_SAMPLE and self.mu is None:
            raise ValueError("gibbs_on_prior_sample needs the wrapped mu spec")
        if self.alpha_prime < 0.0:
            raise ValueError(f"alpha_prime must be nonnegative, got {self.alpha_prime}")


def _layer_blocks(params: ParamVector) -> list[np.ndarray]:
    """Per-layer parameter blocks, weights and biases grouped together."""
    out = []
    for w_sl, b_sl in params.arch.layer_slices:
        out.append(np.concatenate([params.values[w_sl], params.values[b_sl]]))
    return out


def _check_layout(params: ParamVector, ref: ParamVector, what: str) -> None:
    if ref.arch.layer_dims != params.arch.layer_dims:
        raise ValueError(f"{what} layout {ref.arch.layer_dims} does not match "
                         f"hypothesis layout {params.arch.layer_dims}")


def _risk_on(params: ParamVector, data: Dataset, indices) -> float:
    if indices is None:
        return empirical_risk(params, data.X, data.y, LossKind.BOUNDED_CE)
    return empirical_risk(params, data.X[indices], data.y[indices], LossKind.BOUNDED_CE)


def _risk_grad_on(params: ParamVector, data: Dataset, indices) -> np.ndarray:
    if indices is None:
        return risk_gradient(params, data.X, data.y)
    return risk_gradient(params, data.X[indices], data.y[indices])


def norm_value(
    kind: NormKind,
    params: ParamVector,
    init_ref: ParamVector | None = None,
    *,
    sample: Dataset | None = None,
    test: Dataset | None = None,
    sample_indices=None,
    test_indices=None,
) -> float:
    """Evaluate one of the six norms.

    The distance norms need init_ref; the gap needs the learning and test
    samples (full samples for bound evaluation, index slices when called
    from inside a sampler step).
    """
    if kind in (NormKind.DIST_FRO, NormKind.DIST_L2):
        if init_ref is None:
            raise ValueError(f"{kind.value} needs the initialization reference")
        _check_layout(params, init_ref, "initialization reference")
    if kind is NormKind.DIST_FRO:
        blocks = _layer_blocks(params)
        ref_blocks = _layer_blocks(init_ref)
        return float(sum(np.linalg.norm(b - r) for b, r in zip(blocks, ref_blocks)))
    if kind is NormKind.DIST_L2:
        return float(np.linalg.norm(params.values - init_ref.values))
    if kind is NormKind.PAR_NORM:
        return float(sum(float(b @ b) for b in _layer_blocks(params)))
    if kind is NormKind.PATH_NORM:
        return float(forward_squared_allones(params).sum())
    if kind is NormKind.SUM_FRO:
        sq = [float(b @ b) for b in _layer_blocks(params)]
        L = len(sq)
        if any(s == 0.0 for s in sq):
            return 0.0
        return float(L * np.exp(np.mean(np.log(sq))))
    if kind is NormKind.GAP:
        if sample is None or test is None or len(test) == 0:
            raise ValueError("gap needs both the learning sample and a nonempty test sample")
        r_s = _risk_on(params, sample, sample_indices)
        r_t = _risk_on(params, test, test_indices)
        return abs(r_t - r_s)
    raise ValueError(f"unknown norm kind {kind!r}")


def norm_gradient(
    kind: NormKind,
    params: ParamVector,
    init_ref: ParamVector | None = None,
    *,
    sample: Dataset | None = None,
    test: Dataset | None = None,
    sample_indices=None,
    test_indices=None,
) -> np.ndarray:
    """Analytic gradient of norm_value; subgradient 0 at non-differentiable points."""
    d = params.arch.param_count
    if kind is NormKind.DIST_FRO:
        _check_layout(params, init_ref, "initialization reference")
        grad_flat = np.zeros(d)
        for (w_sl, b_sl) in params.arch.layer_slices:
            diff_w = params.values[w_sl] - init_ref.values[w_sl]
            diff_b = params.values[b_sl] - init_ref.values[b_sl]
            norm = np.sqrt(diff_w @ diff_w + diff_b @ diff_b)
            if norm > 0.0:
                grad_flat[w_sl] = diff_w / norm
                grad_flat[b_sl] = diff_b / norm
        return grad_flat
    if kind is NormKind.DIST_L2:
        _check_layout(params, init_ref, "initialization reference")
        diff = params.values - init_ref.values
        norm = np.linalg.norm(diff)
        return diff / norm if norm > 0.0 else np.zeros(d)
    if kind is NormKind.PAR_NORM:
        return 2.0 * params.values
    if kind is NormKind.PATH_NORM:
        return squared_allones_output_gradient(params)
    if kind is NormKind.SUM_FRO:
        sq = []
        for (w_sl, b_sl) in params.arch.layer_slices:
            block = np.concatenate([params.values[w_sl], params.values[b_sl]])
            sq.append(float(block @ block))
        if any(s == 0.0 for s in sq):
            return np.zeros(d)
        value = len(sq) * np.exp(np.mean(np.log(sq)))
        grad_flat = np.empty(d)
        for (w_sl, b_sl), s in zip(params.arch.layer_slices, sq):
            factor = (value / len(sq)) * 2.0 / s
            grad_flat[w_sl] = factor * params.values[w_sl]
            grad_flat[b_sl] = factor * params.values[b_sl]
        return grad_flat
    if kind is NormKind.GAP:
        if sample is None or test is None or len(test) == 0:
            raise ValueError("gap needs both the learning sample and a nonempty test sample")
        diff = _risk_on(params, test, test_indices) - _risk_on(params, sample, sample_indices)
        if diff == 0.0:
            return np.zeros(d)
        sign = 1.0 if diff > 0.0 else -1.0
        return sign * (
            _risk_grad_on(params, test, test_indices)
            - _risk_grad_on(params, sample, sample_indices)
        )
    raise ValueError(f"unknown norm kind {kind!r}")


def _reference_value(spec: MuSpec, ref: ParamVector, **data_kw) -> float:
    if spec.predictor is not None:
        return float(spec.predictor.predict(ref.values))
    return norm_value(spec.norm, ref, spec.init_ref, **data_kw)


def mu_value(
    spec: MuSpec,
    params: ParamVector,
    *,
    sample: Dataset,
    test: Dataset | None = None,
    sample_indices=None,
    test_indices=None,
) -> float:
    """Evaluate mu(h, sample) for the configured family."""
    data_kw = dict(
        sample=sample, test=test, sample_indices=sample_indices, test_indices=test_indices
    )
    if spec.family is MuFamily.EMP_RISK:
        return spec.alpha * _risk_on(params, sample, sample_indices)
    if spec.family is MuFamily.REGULARIZED:
        risk = _risk_on(params, sample, sample_indices)
        reg = norm_value(spec.norm, params, spec.init_ref, **data_kw)
        return spec.alpha * (spec.beta * risk + (1.0 - spec.beta) * reg)
    if spec.family is MuFamily.DISTANCE_TO_REF:
        _check_layout(params, spec.sgd_ref, "trained reference")
        here = _reference_value(spec, params, **data_kw)
        there = _reference_value(spec, spec.sgd_ref, **data_kw)
        return spec.alpha * abs(here - there)
    if spec.family is MuFamily.NEURAL:
        return spec.alpha * float(spec.predictor.predict(params.values))
    raise ValueError(f"unknown mu family {spec.family!r}")


def mu_gradient(
    spec: MuSpec,
    params: ParamVector,
    *,
    sample: Dataset,
    test: Dataset | None = None,
    sample_indices=None,
    test_indices=None,
) -> np.ndarray:
    """Gradient of mu_value w.r.t. the flat hypothesis parameters."""
    data_kw = dict(
        sample=sample, test=test, sample_indices=sample_indices, test_indices=test_indices
    )
    if spec.family is MuFamily.EMP_RISK:
        return spec.alpha * _risk_grad_on(params, sample, sample_indices)
    if spec.family is MuFamily.REGULARIZED:
        g_risk = _risk_grad_on(params, sample, sample_indices)
        g_reg = norm_gradient(spec.norm, params, spec.init_ref, **data_kw)
        return spec.alpha * (spec.beta * g_risk + (1.0 - spec.beta) * g_reg)
    if spec.family is MuFamily.DISTANCE_TO_REF:
        _check_layout(params, spec.sgd_ref, "trained reference")
        here = _reference_value(spec, params, **data_kw)
        there = _reference_value(spec, spec.sgd_ref, **data_kw)
        if here == there:
            return np.zeros(params.arch.param_count)
        sign = 1.0 if here > there else -1.0
        if spec.predictor is not None:
            inner = np.asarray(spec.predictor.input_gradient(params.values))
        else:
            inner = norm_gradient(spec.norm, params, spec.init_ref, **data_kw)
        return spec.alpha * sign * inner
    if spec.family is MuFamily.NEURAL:
        return spec.alpha * np.asarray(spec.predictor.input_gradient(params.values))
    raise ValueError(f"unknown mu family {spec.family!r}")


def omega_value(spec: OmegaSpec, params: ParamVector, *, split) -> float:
    """Evaluate the prior function omega(h).

    The uniform prior is the constant 0 (any constant cancels in the
    omega(h') - omega(h) difference).  The Gibbs-on-prior-sample family
    evaluates the wrapped mu on S' instead of S; the scaled-risk family is
    alpha' times the differentiable risk on S itself.
    """
    if spec.family is OmegaFamily.UNIFORM:
        return 0.0
    if spec.family is OmegaFamily.GIBBS_ON_PRIOR_SAMPLE:
        if len(split.S_prime) == 0:
            raise ValueError("gibbs_on_prior_sample needs a nonempty prior sample")
        return mu_value(spec.mu, params, sample=split.S_prime, test=split.T)
    if spec.family is OmegaFamily.SCALED_RISK:
        return spec.alpha_prime * _risk_on(params, split.S, None)
    raise ValueError(f"unknown omega family {spec.family!r}")


class GibbsObjective:
    """Mini-batch view of nu = mu / alpha, the function SGLD actually descends.

    grad() receives the epoch's shuffled batch indices plus the run's
    generator; only the gap norm consumes the generator, to draw a matching
    test mini-batch per step.
    """

    def __init__(self, spec: MuSpec, arch, sample: Dataset, test: Dataset | None = None):
        if spec.alpha <= 0.0:
            raise ValueError("sampling needs a strictly positive concentration alpha")
        if len(sample) == 0:
            raise ValueError("cannot sample against an empty learning sample")
        self.spec = spec
        self.arch = arch
        self.sample = sample
        self.test = test
        self.n_examples = len(sample)
        self._uses_gap = spec.norm is NormKind.GAP and spec.family in (
            MuFamily.REGULARIZED,
            MuFamily.DISTANCE_TO_REF,
        )

    def value(self, values: np.ndarray) -> float:
        pv = ParamVector(self.arch, values)
        return mu_value(self.spec, pv, sample=self.sample, test=self.test) / self.spec.alpha

    def grad(self, values: np.ndarray, batch_indices, rng: np.random.Generator) -> np.ndarray:
        pv = ParamVector(self.arch, values)
        test_indices = None
        if self._uses_gap:
            test_indices = rng.integers(0, len(self.test), size=len(batch_indices))
        g = mu_gradient(
            self.spec,
            pv,
            sample=self.sample,
            test=self.test,
            sample_indices=batch_indices,
            test_indices=test_indices,
        )
        return g / self.spec.alpha
