"""Stochastic gradient Langevin dynamics over differentiable objectives.

One SGLD iteration moves the flat parameter vector by

    w  <-  w - eta * grad_nu(w)  +  sqrt(2 eta / alpha) * epsilon,

the explicit Euler-Maruyama step whose invariant law approximates the Gibbs
distribution exp(-alpha nu).  Plain SGD is the same loop with the noise
removed.  Objectives are duck-typed: they expose n_examples, value(w), and
grad(w, batch_indices, rng).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .validation import check_positive, check_positive_int


class AutotuneError(RuntimeError):
    """Raised when no learning rate in the ladder decreases the mean loss."""


@dataclass(frozen=True)
class SgldConfig:
    alpha: float = 1.0
    epochs: int = 10
    batch_size: int = 64
    lr_init: float = 0.1
    lr_decay_on_fail: float = 0.1
    lr_floor: float = 1e-10
    lr_epoch_decay: float = 0.5
    max_wraparounds: int = 3
    seed: int = 0

    def __post_init__(self) -> None:
        check_positive("alpha", self.alpha)
        check_positive_int("epochs", self.epochs)
        check_positive_int("batch_size", self.batch_size)
        for name in ("lr_init", "lr_decay_on_fail", "lr_epoch_decay"):
            rate = getattr(self, name)
            if not 0.0 < rate <= 1.0:
                raise ValueError(f"{name} must lie in (0, 1], got {rate!r}")
        check_positive("lr_floor", self.lr_floor)
        check_positive_int("max_wraparounds", self.max_wraparounds)


def sgld_step(
    values: np.ndarray,
    grad_nu: np.ndarray,
    eta: float,
    alpha: float,
    noise: np.ndarray,
) -> np.ndarray:
    """One Langevin step: values - eta * grad_nu + sqrt(2 eta / alpha) * noise."""
    values = np.asarray(values, dtype=float)
    grad_nu = np.asarray(grad_nu, dtype=float)
    noise = np.asarray(noise, dtype=float)
    if grad_nu.shape != values.shape or noise.shape != values.shape:
        raise ValueError(
            f"shape mismatch: values {values.shape}, grad {grad_nu.shape}, noise {noise.shape}"
        )
    check_positive("eta", eta)
    check_positive("alpha", alpha)
    return values - eta * grad_nu + math.sqrt(2.0 * eta / alpha) * noise


class QuadraticObjective:
    """nu(w) = ||w - center||^2 / 2, handy for calibration and tests.

    Its Gibbs distribution with concentration alpha is a Gaussian centered
    at `center` with variance 1/alpha per coordinate.
    """

    def __init__(self, center: np.ndarray, n_examples: int = 64):
        self.center = np.asarray(center, dtype=float)
        self.n_examples = int(n_examples)

    def value(self, values: np.ndarray) -> float:
        diff = values - self.center
        return 0.5 * float(diff @ diff)

    def grad(self, values, batch_indices, rng) -> np.ndarray:
        return values - self.center


def _epoch(objective, values, eta, cfg, noisy, shuffle_rng, noise_rng):
    n = objective.n_examples
    order = shuffle_rng.permutation(n)
    scale = math.sqrt(2.0 * eta / cfg.alpha)
    for start in range(0, n, cfg.batch_size):
        batch = order[start : start + cfg.batch_size]
        g = objective.grad(values, batch, shuffle_rng)
        values = values - eta * g
        if noisy:
            values = values + scale * noise_rng.standard_normal(values.shape)
    return values


def _streams(cfg: SgldConfig, purpose: int, index: int = 0) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=cfg.seed, spawn_key=(purpose, index))
    return np.random.default_rng(ss)


def lr_autotune(objective, init_values: np.ndarray, cfg: SgldConfig, *,
                noisy: bool = True, reinit=None) -> float:
    """First rate in the ladder 0.1, 0.01, ... whose probe epoch lowers the loss.

    Each probe retrains from scratch: reinit(rng) supplies a fresh start
    (defaulting to a copy of the given initialization, with a deterministic
    sub-seed per probe), its pre-training objective value is the baseline,
    and the probe succeeds when one epoch does not end above that baseline.
    Reaching the 1e-10 floor wraps the ladder back to the start; after
    max_wraparounds failed cycles the search aborts with a diagnostic.
    """
    init_values = np.asarray(init_values, dtype=float)
    eta = cfg.lr_init
    wraps = 0
    probe = 0
    while True:
        probe_rng = _streams(cfg, purpose=1, index=probe)
        start = reinit(probe_rng) if reinit is not None else init_values.copy()
        baseline = objective.value(start)
        with np.errstate(over="ignore", invalid="ignore"):
            end = _epoch(objective, start, eta, cfg, noisy, probe_rng, probe_rng)
            final = objective.value(end)
        # A probe fails only when the epoch made things worse (or non-finite);
        # a flat objective must not reject every rate.
        if final <= baseline:
            return eta
        probe += 1
        if eta <= cfg.lr_floor * 1.5:
            wraps += 1
            if wraps >= cfg.max_wraparounds:
                raise AutotuneError(
                    f"no learning rate between {cfg.lr_init} and {cfg.lr_floor} kept "
                    f"the objective from rising above its pre-training value "
                    f"(last baseline {baseline:.6g}) after {wraps} sweeps"
                )
            eta = cfg.lr_init
        else:
            eta = max(eta * cfg.lr_decay_on_fail, cfg.lr_floor)


def _run(objective, init_values, cfg, *, noisy, epochs, min_steps, on_epoch, reinit):
    eta = lr_autotune(objective, init_values, cfg, noisy=noisy, reinit=reinit)
    shuffle_rng = _streams(cfg, purpose=2)
    noise_rng = _streams(cfg, purpose=3)
    values = np.asarray(init_values, dtype=float).copy()
    steps_per_epoch = -(-objective.n_examples // cfg.batch_size)
    steps = 0
    epoch = 0
    while epoch < epochs or (min_steps is not None and steps < min_steps):
        values = _epoch(objective, values, eta, cfg, noisy, shuffle_rng, noise_rng)
        steps += steps_per_epoch
        if on_epoch is not None:
            on_epoch(epoch, values)
        eta *= cfg.lr_epoch_decay
        epoch += 1
    return values


def sgld_run(objective, init_values: np.ndarray, cfg: SgldConfig, *, reinit=None) -> np.ndarray:
    """Autotune the rate, then run seeded mini-batch SGLD with per-epoch decay.

    Returns the final iterate, one draw from (an approximation of) the Gibbs
    distribution exp(-alpha nu).  Identical (objective, init, cfg) give a
    bit-identical trajectory.
    """
    return _run(objective, init_values, cfg, noisy=True, epochs=cfg.epochs,
                min_steps=None, on_epoch=None, reinit=reinit)


def sgd_run(objective, init_values: np.ndarray, cfg: SgldConfig, *,
            epochs_override: int | None = None, min_steps: int | None = None,
            on_epoch=None, reinit=None) -> np.ndarray:
    """Noise-free twin of sgld_run.

    epochs_override supports drawing the epoch budget externally; min_steps
    keeps running whole epochs until that many iterations have happened.
    on_epoch(epoch_index, values) is invoked after each epoch, e.g. to
    snapshot trajectories.
    """
    epochs = cfg.epochs if epochs_override is None else check_positive_int(
        "epochs_override", epochs_override)
    return _run(objective, init_values, cfg, noisy=False, epochs=epochs,
                min_steps=min_steps, on_epoch=on_epoch, reinit=reinit)


@dataclass(frozen=True)
class AdamState:
    """Moment estimates for Adam; step counter starts at 0."""

    m: np.ndarray
    v: np.ndarray
    t: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def init(cls, size: int, lr: float = 1e-3) -> "AdamState":
        return cls(m=np.zeros(size), v=np.zeros(size), lr=lr)


def adam_step(state: AdamState, grad: np.ndarray) -> tuple[AdamState, np.ndarray]:
    """Standard bias-corrected Adam; returns (new state, additive update)."""
    grad = np.asarray(grad, dtype=float)
    if grad.shape != state.m.shape:
        raise ValueError(f"gradient shape {grad.shape} does not match state {state.m.shape}")
    t = state.t + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    v = state.beta2 * state.v + (1.0 - state.beta2) * grad * grad
    m_hat = m / (1.0 - state.beta1**t)
    v_hat = v / (1.0 - state.beta2**t)
    update = -state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return replace(state, m=m, v=v, t=t), update
