"""Experiment configuration: flat INI-style key-value file with sections
[task], [model], [mu], [sampler], [bound], [sweep]."""

from __future__ import annotations

import configparser
import hashlib
import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

KNOWN_FAMILIES = ("cor4", "cor5", "eq8", "eq9")
KNOWN_MU_FAMILIES = ("emp_risk", "regularized", "distance_to_ref", "neural")
KNOWN_NORMS = ("dist_fro", "dist_l2", "par_norm", "path_norm", "sum_fro", "gap")

DATA_DIR_ENV = "GIBBSCERT_DATA_DIR"


class ConfigError(Exception):
    """Configuration problem; the message names the offending section/key."""


@dataclass(frozen=True)
class TaskConfig:
    kind: str = "blobs"
    dim: int = 2
    separation: float = 3.0
    sigma: float = 1.0
    weight1: float = 0.5
    pool_size: int = 400
    test_size: int = 2000
    sample_size: int = 200
    oracle: str = "closed_form"
    hidden_samples: int = 1_000_000
    train_images: str = ""
    train_labels: str = ""
    test_images: str = ""
    test_labels: str = ""


@dataclass(frozen=True)
class ModelConfig:
    hidden: tuple[int, ...] = ()
    leaky_slope: float = 0.01


@dataclass(frozen=True)
class MuConfig:
    family: str = "emp_risk"
    norm: str = ""
    beta: float = 1.0
    alpha: float = 0.0  # 0 means "use the sweep grid value"
    predictor: str = ""


@dataclass(frozen=True)
class SamplerSection:
    epochs: int = 10
    batch_size: int = 64
    lr_init: float = 0.1
    lr_decay_on_fail: float = 0.1
    lr_floor: float = 1e-10
    lr_epoch_decay: float = 0.5
    max_wraparounds: int = 3


@dataclass(frozen=True)
class BoundConfig:
    delta: float = 0.05
    families: tuple[str, ...] = ("cor4", "cor5", "eq8", "eq9")
    alpha_prime: float = -1.0  # -1 means "same as alpha"


@dataclass(frozen=True)
class SweepConfig:
    mode: str = "alpha"  # alpha | beta | none
    alpha_points: int = 5
    beta_grid: tuple[float, ...] = (0.0, 0.25, 0.5, 0.75, 1.0)
    ratio: float = 0.5
    repetitions: int = 5
    workers: int = 1


@dataclass(frozen=True)
class ExperimentConfig:
    task: TaskConfig = field(default_factory=TaskConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    mu: MuConfig = field(default_factory=MuConfig)
    sampler: SamplerSection = field(default_factory=SamplerSection)
    bound: BoundConfig = field(default_factory=BoundConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)

    def digest(self) -> str:
        payload = json.dumps(asdict(self), sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


def _get(parser, section, key, cast, default):
    if not parser.has_option(section, key):
        return default
    raw = parser.get(section, key)
    try:
        return cast(raw)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"[{section}] {key}: cannot parse {raw!r}: {exc}") from exc


def _bool(raw: str) -> bool:
    lowered = raw.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


def _int_tuple(raw: str) -> tuple[int, ...]:
    raw = raw.strip()
    if not raw:
        return ()
    return tuple(int(part) for part in raw.replace(",", " ").split())


def _float_tuple(raw: str) -> tuple[float, ...]:
    raw = raw.strip()
    if not raw:
        return ()
    return tuple(float(part) for part in raw.replace(",", " ").split())


def _str_tuple(raw: str) -> tuple[str, ...]:
    return tuple(part for part in raw.replace(",", " ").split() if part)


def resolve_data_path(path: str) -> str:
    """Resolve a dataset path, honoring the data-directory override variable."""
    base = os.environ.get(DATA_DIR_ENV)
    if base and not os.path.isabs(path):
        return str(Path(base) / path)
    return path


def load_config(path) -> ExperimentConfig:
    """Parse and validate an experiment config file."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    read = parser.read(path)
    if not read:
        raise ConfigError(f"config file not found: {path}")

    known_sections = {"task", "model", "mu", "sampler", "bound", "sweep"}
    for section in parser.sections():
        if section not in known_sections:
            raise ConfigError(f"[{section}]: unknown section")

    task = TaskConfig(
        kind=_get(parser, "task", "kind", str, "blobs"),
        dim=_get(parser, "task", "dim", int, 2),
        separation=_get(parser, "task", "separation", float, 3.0),
        sigma=_get(parser, "task", "sigma", float, 1.0),
        weight1=_get(parser, "task", "weight1", float, 0.5),
        pool_size=_get(parser, "task", "pool_size", int, 400),
        test_size=_get(parser, "task", "test_size", int, 2000),
        sample_size=_get(parser, "task", "sample_size", int, 200),
        oracle=_get(parser, "task", "oracle", str, "closed_form"),
        hidden_samples=_get(parser, "task", "hidden_samples", int, 1_000_000),
        train_images=_get(parser, "task", "train_images", str, ""),
        train_labels=_get(parser, "task", "train_labels", str, ""),
        test_images=_get(parser, "task", "test_images", str, ""),
        test_labels=_get(parser, "task", "test_labels", str, ""),
    )
    if task.kind not in ("blobs", "idx"):
        raise ConfigError(f"[task] kind: expected 'blobs' or 'idx', got {task.kind!r}")
    if task.oracle not in ("closed_form", "hidden"):
        raise ConfigError(f"[task] oracle: expected 'closed_form' or 'hidden', got {task.oracle!r}")
    if task.kind == "idx":
        for key, value in (("train_images", task.train_images),
                           ("train_labels", task.train_labels)):
            if not value:
                raise ConfigError(f"[task] {key}: required when kind = idx")
    if task.sigma <= 0:
        raise ConfigError("[task] sigma: must be positive")
    if task.pool_size < 2:
        raise ConfigError("[task] pool_size: must be at least 2")

    model = ModelConfig(
        hidden=_get(parser, "model", "hidden", _int_tuple, ()),
        leaky_slope=_get(parser, "model", "leaky_slope", float, 0.01),
    )

    mu = MuConfig(
        family=_get(parser, "mu", "family", str, "emp_risk"),
        norm=_get(parser, "mu", "norm", str, ""),
        beta=_get(parser, "mu", "beta", float, 1.0),
        alpha=_get(parser, "mu", "alpha", float, 0.0),
        predictor=_get(parser, "mu", "predictor", str, ""),
    )
    if mu.family not in KNOWN_MU_FAMILIES:
        raise ConfigError(f"[mu] family: expected one of {KNOWN_MU_FAMILIES}, got {mu.family!r}")
    if mu.norm and mu.norm not in KNOWN_NORMS:
        raise ConfigError(f"[mu] norm: expected one of {KNOWN_NORMS}, got {mu.norm!r}")
    if mu.family == "regularized" and not mu.norm:
        raise ConfigError("[mu] norm: required for the regularized family")
    if mu.family == "distance_to_ref" and not mu.norm and not mu.predictor:
        raise ConfigError("[mu] norm: required for distance_to_ref unless a predictor is given")
    if mu.family == "neural" and not mu.predictor:
        raise ConfigError("[mu] predictor: required for the neural family")
    if not 0.0 <= mu.beta <= 1.0:
        raise ConfigError(f"[mu] beta: must lie in [0, 1], got {mu.beta}")

    sampler = SamplerSection(
        epochs=_get(parser, "sampler", "epochs", int, 10),
        batch_size=_get(parser, "sampler", "batch_size", int, 64),
        lr_init=_get(parser, "sampler", "lr_init", float, 0.1),
        lr_decay_on_fail=_get(parser, "sampler", "lr_decay_on_fail", float, 0.1),
        lr_floor=_get(parser, "sampler", "lr_floor", float, 1e-10),
        lr_epoch_decay=_get(parser, "sampler", "lr_epoch_decay", float, 0.5),
        max_wraparounds=_get(parser, "sampler", "max_wraparounds", int, 3),
    )
    if sampler.epochs < 1:
        raise ConfigError("[sampler] epochs: must be at least 1")
    if sampler.batch_size < 1:
        raise ConfigError("[sampler] batch_size: must be at least 1")

    bound = BoundConfig(
        delta=_get(parser, "bound", "delta", float, 0.05),
        families=_get(parser, "bound", "families", _str_tuple,
                      ("cor4", "cor5", "eq8", "eq9")),
        alpha_prime=_get(parser, "bound", "alpha_prime", float, -1.0),
    )
    if not 0.0 < bound.delta <= 1.0:
        raise ConfigError(f"[bound] delta: must lie in (0, 1], got {bound.delta}")
    for family in bound.families:
        if family not in KNOWN_FAMILIES:
            raise ConfigError(f"[bound] families: unknown family {family!r}")
    if not bound.families:
        raise ConfigError("[bound] families: at least one family is required")

    sweep = SweepConfig(
        mode=_get(parser, "sweep", "mode", str, "alpha"),
        alpha_points=_get(parser, "sweep", "alpha_points", int, 5),
        beta_grid=_get(parser, "sweep", "beta_grid", _float_tuple,
                       (0.0, 0.25, 0.5, 0.75, 1.0)),
        ratio=_get(parser, "sweep", "ratio", float, 0.5),
        repetitions=_get(parser, "sweep", "repetitions", int, 5),
        workers=_get(parser, "sweep", "workers", int, 1),
    )
    if sweep.mode not in ("alpha", "beta", "none"):
        raise ConfigError(f"[sweep] mode: expected alpha, beta or none, got {sweep.mode!r}")
    if sweep.alpha_points < 1:
        raise ConfigError("[sweep] alpha_points: must be at least 1")
    if sweep.mode == "beta" and not sweep.beta_grid:
        raise ConfigError("[sweep] beta_grid: required for a beta sweep")
    if any(not 0.0 <= b <= 1.0 for b in sweep.beta_grid):
        raise ConfigError(f"[sweep] beta_grid: values must lie in [0, 1], got {sweep.beta_grid}")
    if not 0.0 < sweep.ratio < 1.0:
        raise ConfigError(f"[sweep] ratio: must lie in (0, 1), got {sweep.ratio}")
    if sweep.repetitions < 1:
        raise ConfigError("[sweep] repetitions: must be at least 1")
    if sweep.workers < 1:
        raise ConfigError("[sweep] workers: must be at least 1")

    return ExperimentConfig(task=task, model=model, mu=mu, sampler=sampler,
                            bound=bound, sweep=sweep)
