"""Learned complexity measure: predict a generalization gap from raw weights.

Pipeline: train many throwaway networks on shifting train/validation splits,
snapshot (weights, gap) pairs after each epoch, rebalance the gap
distribution into bins, then fit a feed-forward regressor on the weights.
The regressor l2-normalizes its input, applies one batch-normalization
layer, a stack of leaky-ReLU hidden layers, and squares its scalar output,
so predictions are nonnegative and invariant to positive rescaling of the
input weights.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, split_dataset
from .measures import GibbsObjective, MuFamily, MuSpec
from .model import (
    Architecture,
    LossKind,
    ParamVector,
    _forward_pass_raw,
    _leaky_deriv,
    empirical_risk,
    init_params,
)
from .sampler import AdamState, SgldConfig, adam_step, sgd_run
from .validation import check_positive_int

PREDICTOR_SCHEMA_VERSION = 1

# Keeps the batch-normalization denominator finite when a feature collapses
# to a single value; the configured eps (0 by default) is added on top.
_VAR_FLOOR = 1e-12


@dataclass
class GapDatasetEntry:
    values: np.ndarray
    gap: float
    split_ratio: float


@dataclass(frozen=True)
class PredictorConfig:
    hidden_layers: int = 3
    width: int = 64
    batch_size: int = 64
    adam_lr: float = 1e-3
    val_ratio: float = 0.3
    epochs: int = 100
    bins: int = 50
    min_bin_frac: float = 0.01
    bn_momentum: float = 0.1
    bn_eps: float = 0.0
    leaky_slope: float = 0.01
    seed: int = 0

    def __post_init__(self) -> None:
        check_positive_int("hidden_layers", self.hidden_layers)
        check_positive_int("width", self.width)
        check_positive_int("batch_size", self.batch_size)
        check_positive_int("epochs", self.epochs)
        check_positive_int("bins", self.bins)
        if not 0.0 < self.val_ratio < 1.0:
            raise ValueError(f"val_ratio must lie in (0, 1), got {self.val_ratio}")
        if not 0.0 <= self.min_bin_frac < 1.0:
            raise ValueError(f"min_bin_frac must lie in [0, 1), got {self.min_bin_frac}")


@dataclass(frozen=True)
class GapBuilderConfig:
    """Split ratios are validation fractions; repetitions count trainings per
    ratio.  Desk-scale defaults; the full protocol ran 1000/120/110 trainings
    and at least 8000 SGD iterations each."""

    ratios: tuple[float, ...] = (
        0.99, 0.97, 0.95, 0.93, 0.90,
        0.80, 0.70, 0.60, 0.50, 0.40, 0.30, 0.20, 0.10,
    )
    repetitions: tuple[int, ...] = (40, 40, 40, 40, 5, 4, 4, 4, 4, 4, 4, 4, 4)
    min_steps: int = 200

    def __post_init__(self) -> None:
        if len(self.ratios) != len(self.repetitions):
            raise ValueError("ratios and repetitions must have the same length")
        if any(r < 0 for r in self.repetitions):
            raise ValueError("repetition counts must be nonnegative")


def merged_bin_ids(gaps, bins: int = 50, min_frac: float = 0.01) -> np.ndarray:
    """Assign each gap to a surviving bin after the undersized-bin merge.

    Gaps fall into equal-width bins over their observed range.  Scanning left
    to right, any bin holding less than min_frac of the dataset is merged
    into its higher-gap neighbor (the highest bin merges downward), repeated
    until stable.  Returned ids are consecutive integers starting at 0.
    """
    gaps = np.asarray(gaps, dtype=float)
    if gaps.ndim != 1 or len(gaps) == 0:
        raise ValueError("gaps must be a nonempty vector")
    lo, hi = float(gaps.min()), float(gaps.max())
    if hi <= lo:
        return np.zeros(len(gaps), dtype=int)
    edges = np.linspace(lo, hi, bins + 1)
    raw = np.clip(np.digitize(gaps, edges[1:-1]), 0, bins - 1)

    groups: list[list[int]] = [[b] for b in range(bins)]
    counts = np.bincount(raw, minlength=bins).astype(int).tolist()
    threshold = min_frac * len(gaps)
    while len(counts) > 1:
        small = next((i for i, c in enumerate(counts) if c < threshold), None)
        if small is None:
            break
        into = small + 1 if small + 1 < len(counts) else small - 1
        keep, drop = min(small, into), max(small, into)
        groups[keep] = groups[keep] + groups[drop]
        counts[keep] += counts[drop]
        del groups[drop], counts[drop]

    lookup = np.empty(bins, dtype=int)
    for gid, members in enumerate(groups):
        lookup[members] = gid
    ids = lookup[raw]
    # Relabel so ids are consecutive over bins that actually hold entries.
    _, ids = np.unique(ids, return_inverse=True)
    return ids


def rebalance_bins(gaps, bins: int = 50, min_frac: float = 0.01) -> np.ndarray:
    """Per-entry sampling weights that hit every surviving bin uniformly.

    Each entry gets weight (1 / n_bins) * (1 / |its bin|); weights sum to 1.
    """
    ids = merged_bin_ids(gaps, bins, min_frac)
    n_bins = int(ids.max()) + 1
    counts = np.bincount(ids, minlength=n_bins)
    return 1.0 / (n_bins * counts[ids])


def build_gap_dataset(
    pool: Dataset,
    arch: Architecture,
    sampler_cfg: SgldConfig,
    builder: GapBuilderConfig,
    seed: int,
) -> list[GapDatasetEntry]:
    """Train throwaway models over the configured splits and record
    (weights, |val risk - train risk|) after every epoch."""
    entries: list[GapDatasetEntry] = []
    run = 0
    for ratio, reps in zip(builder.ratios, builder.repetitions):
        for _ in range(reps):
            ss = np.random.SeedSequence(entropy=seed, spawn_key=(run,))
            split_ss, init_ss, train_ss = ss.spawn(3)
            split = split_dataset(pool, ratio, np.random.default_rng(split_ss))
            train, val = split.S, split.S_prime
            if len(val) == 0:
                raise ValueError(
                    f"pool of {len(pool)} examples is too small for split ratio {ratio}"
                )
            init = init_params(arch, np.random.default_rng(init_ss))
            objective = GibbsObjective(MuSpec(MuFamily.EMP_RISK, alpha=1.0), arch, train)
            cfg = SgldConfig(
                alpha=sampler_cfg.alpha,
                epochs=sampler_cfg.epochs,
                batch_size=sampler_cfg.batch_size,
                lr_init=sampler_cfg.lr_init,
                lr_decay_on_fail=sampler_cfg.lr_decay_on_fail,
                lr_floor=sampler_cfg.lr_floor,
                lr_epoch_decay=sampler_cfg.lr_epoch_decay,
                max_wraparounds=sampler_cfg.max_wraparounds,
                seed=int(train_ss.generate_state(1)[0]),
            )

            def snapshot(_epoch, values, _ratio=ratio, _train=train, _val=val):
                pv = ParamVector(arch, values)
                train_risk = empirical_risk(pv, _train.X, _train.y, LossKind.BOUNDED_CE)
                val_risk = empirical_risk(pv, _val.X, _val.y, LossKind.BOUNDED_CE)
                entries.append(
                    GapDatasetEntry(values.copy(), abs(val_risk - train_risk), _ratio)
                )

            sgd_run(objective, init.values, cfg, min_steps=builder.min_steps,
                    on_epoch=snapshot,
                    reinit=lambda rng, _a=arch: init_params(_a, rng).values)
            run += 1
    return entries


@dataclass
class GapPredictorModel:
    """Trained gap regressor: linear stack plus one input batch-norm layer."""

    arch: Architecture
    values: np.ndarray
    bn_gamma: np.ndarray
    bn_beta: np.ndarray
    bn_mean: np.ndarray
    bn_var: np.ndarray
    bn_eps: float
    history: list[float] = field(default_factory=list)
    best_epoch: int = -1

    @property
    def input_dim(self) -> int:
        return self.arch.input_dim

    def predict(self, w: np.ndarray) -> float:
        w = np.asarray(w, dtype=float)
        if w.shape != (self.input_dim,):
            raise ValueError(f"expected {self.input_dim} weights, got shape {w.shape}")
        out, _ = _predictor_forward(self, w[None, :], training=False)
        return float(out[0])

    def predict_batch(self, W: np.ndarray) -> np.ndarray:
        W = np.atleast_2d(np.asarray(W, dtype=float))
        if W.shape[1] != self.input_dim:
            raise ValueError(f"expected {self.input_dim} weights, got shape {W.shape}")
        return _predictor_forward(self, W, training=False)[0]

    def input_gradient(self, w: np.ndarray) -> np.ndarray:
        """d predict / d w at inference, for sampling against this measure."""
        return _predictor_input_gradient(self, np.asarray(w, dtype=float))


def _predictor_arch(input_dim: int, cfg: PredictorConfig) -> Architecture:
    dims = (input_dim,) + (cfg.width,) * cfg.hidden_layers + (1,)
    return Architecture(dims, leaky_slope=cfg.leaky_slope)


def _l2_normalize(W: np.ndarray):
    norms = np.linalg.norm(W, axis=1, keepdims=True)
    safe = np.where(norms > 0.0, norms, 1.0)
    return W / safe, safe


def _predictor_forward(model: GapPredictorModel, W: np.ndarray, *, training: bool):
    """Squared scalar outputs for a batch of weight vectors, plus a cache."""
    Xn, _ = _l2_normalize(W)
    if training:
        mean = Xn.mean(axis=0)
        var = Xn.var(axis=0)
    else:
        mean, var = model.bn_mean, model.bn_var
    denom = np.sqrt(np.maximum(var + model.bn_eps, _VAR_FLOOR))
    x_hat = (Xn - mean) / denom
    bn_out = model.bn_gamma * x_hat + model.bn_beta

    pv = ParamVector(model.arch, model.values)
    pre, acts = _forward_pass_raw(pv, bn_out)
    s = pre[-1][:, 0]
    cache = (mean, var, denom, x_hat, pre, acts, s)
    return s * s, cache


def _predictor_input_gradient(model: GapPredictorModel, w: np.ndarray) -> np.ndarray:
    if w.shape != (model.input_dim,):
        raise ValueError(f"expected {model.input_dim} weights, got shape {w.shape}")
    slope = model.arch.leaky_slope
    norm = float(np.linalg.norm(w))
    safe = norm if norm > 0.0 else 1.0
    xn = w / safe
    denom = np.sqrt(np.maximum(model.bn_var + model.bn_eps, _VAR_FLOOR))
    x_hat = (xn - model.bn_mean) / denom
    bn_out = model.bn_gamma * x_hat + model.bn_beta

    pv = ParamVector(model.arch, model.values)
    pre, _ = _forward_pass_raw(pv, bn_out[None, :])
    s = float(pre[-1][0, 0])

    delta = np.array([[2.0 * s]])
    for idx in range(model.arch.n_layers - 1, -1, -1):
        W_mat, _ = pv.layers()[idx]
        delta = delta @ W_mat
        if idx > 0:
            delta = delta * _leaky_deriv(pre[idx - 1], slope)
    g_bn = delta[0]
    g_xn = g_bn * model.bn_gamma / denom
    if norm > 0.0:
        # Through x / ||x||: project out the radial component, then rescale.
        return (g_xn - xn * float(xn @ g_xn)) / norm
    return g_xn


def _predictor_backward(model: GapPredictorModel, cache, d_out: np.ndarray):
    """Gradients of a scalar loss w.r.t. (linear params, bn_gamma, bn_beta).

    d_out is dLoss/d(squared output) per example.  The normalized features
    x_hat are data, not parameters, so no gradient flows through the batch
    statistics themselves.
    """
    _, _, _, x_hat, pre, acts, s = cache
    arch = model.arch
    slope = arch.leaky_slope
    pv = ParamVector(arch, model.values)
    layers = pv.layers()

    grad_values = np.zeros(arch.param_count)
    delta = (d_out * 2.0 * s)[:, None]
    for idx in range(arch.n_layers - 1, -1, -1):
        W_mat, _ = layers[idx]
        w_sl, b_sl = arch.layer_slices[idx]
        grad_values[w_sl] = (delta.T @ acts[idx]).ravel()
        grad_values[b_sl] = delta.sum(axis=0)
        delta = delta @ W_mat
        if idx > 0:
            delta = delta * _leaky_deriv(pre[idx - 1], slope)

    d_bn = delta
    grad_gamma = (d_bn * x_hat).sum(axis=0)
    grad_beta = d_bn.sum(axis=0)
    return grad_values, grad_gamma, grad_beta


def train_predictor(entries: list[GapDatasetEntry], cfg: PredictorConfig) -> GapPredictorModel:
    """Fit the gap regressor with Adam on weighted-resampled batches.

    Minimizes the mean absolute error; returns the epoch checkpoint with the
    smallest validation MAE, batch-norm running statistics frozen at that
    same epoch.  history holds the full per-epoch validation curve.
    """
    if len(entries) < 2:
        raise ValueError("need at least two gap entries to fit a predictor")
    dims = {len(e.values) for e in entries}
    if len(dims) != 1:
        raise ValueError(f"entries disagree on weight dimension: {sorted(dims)}")
    input_dim = dims.pop()

    root = np.random.SeedSequence(cfg.seed)
    split_ss, init_ss, batch_ss = root.spawn(3)
    order = np.random.default_rng(split_ss).permutation(len(entries))
    n_val = max(1, int(round(cfg.val_ratio * len(entries))))
    n_train = len(entries) - n_val
    if n_train < 1:
        raise ValueError(
            f"validation ratio {cfg.val_ratio} leaves no training entries out of {len(entries)}"
        )
    train_idx, val_idx = order[:n_train], order[n_train:]
    W_all = np.stack([e.values for e in entries])
    g_all = np.array([e.gap for e in entries])
    W_train, g_train = W_all[train_idx], g_all[train_idx]
    W_val, g_val = W_all[val_idx], g_all[val_idx]

    weights = rebalance_bins(g_train, cfg.bins, cfg.min_bin_frac)

    arch = _predictor_arch(input_dim, cfg)
    model = GapPredictorModel(
        arch=arch,
        values=init_params(arch, np.random.default_rng(init_ss)).values,
        bn_gamma=np.ones(input_dim),
        bn_beta=np.zeros(input_dim),
        bn_mean=np.zeros(input_dim),
        bn_var=np.ones(input_dim),
        bn_eps=cfg.bn_eps,
    )
    adam = AdamState.init(arch.param_count + 2 * input_dim, lr=cfg.adam_lr)
    rng = np.random.default_rng(batch_ss)

    best = None
    steps_per_epoch = -(-n_train // cfg.batch_size)
    for epoch in range(cfg.epochs):
        for _ in range(steps_per_epoch):
            idx = rng.choice(n_train, size=cfg.batch_size, replace=True, p=weights)
            out, cache = _predictor_forward(model, W_train[idx], training=True)
            d_out = np.sign(out - g_train[idx]) / len(out)
            g_vals, g_gamma, g_beta = _predictor_backward(model, cache, d_out)
            adam, update = adam_step(adam, np.concatenate([g_vals, g_gamma, g_beta]))
            model.values = model.values + update[: arch.param_count]
            model.bn_gamma = model.bn_gamma + update[
                arch.param_count : arch.param_count + input_dim]
            model.bn_beta = model.bn_beta + update[arch.param_count + input_dim :]
            batch_mean, batch_var, *_ = cache
            model.bn_mean = (1.0 - cfg.bn_momentum) * model.bn_mean + cfg.bn_momentum * batch_mean
            model.bn_var = (1.0 - cfg.bn_momentum) * model.bn_var + cfg.bn_momentum * batch_var

        val_pred, _ = _predictor_forward(model, W_val, training=False)
        val_mae = float(np.mean(np.abs(val_pred - g_val)))
        model.history.append(val_mae)
        if best is None or val_mae < best[0]:
            best = (val_mae, epoch, model.values.copy(), model.bn_gamma.copy(),
                    model.bn_beta.copy(), model.bn_mean.copy(), model.bn_var.copy())

    _, best_epoch, values, gamma, beta, mean, var = best
    return GapPredictorModel(
        arch=arch,
        values=values,
        bn_gamma=gamma,
        bn_beta=beta,
        bn_mean=mean,
        bn_var=var,
        bn_eps=cfg.bn_eps,
        history=model.history,
        best_epoch=best_epoch,
    )


def predict_gap(model: GapPredictorModel, params) -> float:
    """Nonnegative gap estimate for a hypothesis (ParamVector or flat array)."""
    values = getattr(params, "values", params)
    return model.predict(np.asarray(values, dtype=float))


def save_gap_dataset(entries: list[GapDatasetEntry], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for e in entries:
            fh.write(json.dumps({
                "schema_version": PREDICTOR_SCHEMA_VERSION,
                "gap": e.gap,
                "split_ratio": e.split_ratio,
                "values": e.values.tolist(),
            }, sort_keys=True, separators=(",", ":")))
            fh.write("\n")


def load_gap_dataset(path) -> list[GapDatasetEntry]:
    entries = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                payload = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}: malformed entry on line {lineno}: {exc}") from exc
            if payload.get("schema_version") != PREDICTOR_SCHEMA_VERSION:
                raise ValueError(f"{path}: line {lineno}: unknown schema version")
            entries.append(GapDatasetEntry(
                np.asarray(payload["values"], dtype=float),
                float(payload["gap"]),
                float(payload["split_ratio"]),
            ))
    return entries


def save_predictor(path, model: GapPredictorModel) -> None:
    """Versioned binary checkpoint with the layer layout in the header."""
    np.savez(
        path,
        schema_version=PREDICTOR_SCHEMA_VERSION,
        layer_dims=np.asarray(model.arch.layer_dims, dtype=int),
        leaky_slope=model.arch.leaky_slope,
        values=model.values,
        bn_gamma=model.bn_gamma,
        bn_beta=model.bn_beta,
        bn_mean=model.bn_mean,
        bn_var=model.bn_var,
        bn_eps=model.bn_eps,
        best_epoch=model.best_epoch,
    )


def load_predictor(path) -> GapPredictorModel:
    with np.load(path) as payload:
        version = int(payload["schema_version"])
        if version != PREDICTOR_SCHEMA_VERSION:
            raise ValueError(f"{path}: predictor schema version {version} unsupported")
        arch = Architecture(tuple(int(d) for d in payload["layer_dims"]),
                            leaky_slope=float(payload["leaky_slope"]))
        return GapPredictorModel(
            arch=arch,
            values=payload["values"].copy(),
            bn_gamma=payload["bn_gamma"].copy(),
            bn_beta=payload["bn_beta"].copy(),
            bn_mean=payload["bn_mean"].copy(),
            bn_var=payload["bn_var"].copy(),
            bn_eps=float(payload["bn_eps"]),
            best_epoch=int(payload["best_epoch"]),
        )
