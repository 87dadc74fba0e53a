"""Dataset ingestion (IDX), synthetic tasks with a true-risk oracle, splits,
and JSON-lines run records."""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy.stats import norm as _normal

from .model import LossKind, ParamVector, empirical_risk

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801

RECORD_SCHEMA_VERSION = 1


@dataclass
class Dataset:
    """Flat feature matrix plus integer labels."""

    X: np.ndarray
    y: np.ndarray
    n_classes: int

    def __post_init__(self) -> None:
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        self.y = np.asarray(self.y, dtype=int)
        if len(self.X) != len(self.y):
            raise ValueError(f"{len(self.X)} inputs but {len(self.y)} labels")
        if len(self.y) and (self.y.min() < 0 or self.y.max() >= self.n_classes):
            raise ValueError("labels out of range for n_classes")

    def __len__(self) -> int:
        return len(self.y)

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    def take(self, indices) -> "Dataset":
        return Dataset(self.X[indices], self.y[indices], self.n_classes)


@dataclass
class DataSplit:
    """Learning sample S, prior sample S', and held-out test sample T."""

    S: Dataset
    S_prime: Dataset
    T: Dataset
    ratio: float

    @property
    def m(self) -> int:
        return len(self.S)

    @property
    def m_prime(self) -> int:
        return len(self.S_prime)


def _read_be_u32(buf: bytes, offset: int, path: str) -> int:
    if offset + 4 > len(buf):
        raise ValueError(f"{path}: truncated header at byte {offset}")
    return struct.unpack_from(">I", buf, offset)[0]


def load_idx(path) -> np.ndarray:
    """Parse one big-endian IDX file.

    Image files (magic 0x00000803) come back as a float array of shape
    (n, rows, cols) scaled into [0, 1]; label files (magic 0x00000801) as an
    integer vector.
    """
    path = str(path)
    buf = Path(path).read_bytes()
    magic = _read_be_u32(buf, 0, path)
    if magic == IDX_IMAGES_MAGIC:
        n = _read_be_u32(buf, 4, path)
        rows = _read_be_u32(buf, 8, path)
        cols = _read_be_u32(buf, 12, path)
        payload = buf[16:]
        expected = n * rows * cols
        if len(payload) < expected:
            raise ValueError(
                f"{path}: truncated image payload, expected {expected} bytes, got {len(payload)}"
            )
        pixels = np.frombuffer(payload[:expected], dtype=np.uint8)
        return pixels.reshape(n, rows, cols).astype(float) / 255.0
    if magic == IDX_LABELS_MAGIC:
        n = _read_be_u32(buf, 4, path)
        payload = buf[8:]
        if len(payload) < n:
            raise ValueError(
                f"{path}: truncated label payload, expected {n} bytes, got {len(payload)}"
            )
        return np.frombuffer(payload[:n], dtype=np.uint8).astype(int)
    raise ValueError(
        f"{path}: bad IDX magic bytes 0x{magic:08x} "
        f"(expected 0x{IDX_IMAGES_MAGIC:08x} for images or 0x{IDX_LABELS_MAGIC:08x} for labels)"
    )


def load_idx_dataset(images_path, labels_path, n_classes: int | None = None) -> Dataset:
    """Load a paired image/label IDX file into a flat Dataset."""
    images = load_idx(images_path)
    labels = load_idx(labels_path)
    if images.ndim != 3:
        raise ValueError(f"{images_path}: expected an image file, found labels")
    if labels.ndim != 1:
        raise ValueError(f"{labels_path}: expected a label file, found images")
    if len(images) != len(labels):
        raise ValueError(
            f"image/label count mismatch: {len(images)} images vs {len(labels)} labels"
        )
    if n_classes is None:
        n_classes = int(labels.max()) + 1 if len(labels) else 1
    return Dataset(images.reshape(len(images), -1), labels, n_classes)


@dataclass(frozen=True)
class BlobsSpec:
    """Two Gaussian classes with shared isotropic covariance.

    Class means sit at -separation/2 and +separation/2 along the first axis,
    so overlap (and hence the Bayes risk) is controlled by separation/sigma.
    """

    dim: int = 2
    separation: float = 3.0
    sigma: float = 1.0
    weight1: float = 0.5
    oracle_mode: str = "closed_form"
    hidden_samples: int = 1_000_000

    def __post_init__(self) -> None:
        if self.sigma <= 0.0:
            raise ValueError("sigma must be positive: a zero-variance spec is degenerate")
        if not 0.0 < self.weight1 < 1.0:
            raise ValueError(f"weight1 must lie in (0, 1), got {self.weight1}")
        if self.oracle_mode not in ("closed_form", "hidden"):
            raise ValueError(f"unknown oracle_mode {self.oracle_mode!r}")

    @property
    def mean0(self) -> np.ndarray:
        m = np.zeros(self.dim)
        m[0] = -self.separation / 2.0
        return m

    @property
    def mean1(self) -> np.ndarray:
        m = np.zeros(self.dim)
        m[0] = self.separation / 2.0
        return m


def _sample_blobs(spec: BlobsSpec, n: int, rng: np.random.Generator) -> Dataset:
    y = (rng.random(n) < spec.weight1).astype(int)
    X = rng.standard_normal((n, spec.dim)) * spec.sigma
    X[y == 0] += spec.mean0
    X[y == 1] += spec.mean1
    return Dataset(X, y, 2)


def _linear_blobs_risk(spec: BlobsSpec, params: ParamVector) -> float:
    """Exact 01 risk of a single-layer (linear) model on the blobs task.

    The predicted label is 1 iff the logit difference is strictly positive,
    matching argmax tie-breaking toward the lower index.
    """
    if params.arch.n_layers != 1 or params.arch.n_labels != 2:
        raise ValueError("closed-form oracle requires a single-layer two-label model")
    (W, b), = params.layers()
    u = W[1] - W[0]
    c = b[1] - b[0]
    scale = spec.sigma * float(np.linalg.norm(u))
    w0 = 1.0 - spec.weight1
    if scale == 0.0:
        return w0 if c > 0.0 else spec.weight1
    mu0 = float(u @ spec.mean0) + c
    mu1 = float(u @ spec.mean1) + c
    # Mislabel class 0 when the score is positive, class 1 when it is not.
    return float(w0 * _normal.sf(-mu0 / scale) + spec.weight1 * _normal.cdf(-mu1 / scale))


@dataclass
class SyntheticTask:
    """Pool + test data from a known distribution, with a true-risk oracle."""

    spec: BlobsSpec
    pool: Dataset
    test: Dataset
    _hidden: Dataset | None

    def oracle(self, params: ParamVector) -> float:
        """R_D under the 01 loss: closed form when available, else a hidden sample."""
        if self._hidden is not None:
            return empirical_risk(params, self._hidden.X, self._hidden.y, LossKind.ZERO_ONE)
        return _linear_blobs_risk(self.spec, params)

    def sample(self, n: int, rng: np.random.Generator) -> Dataset:
        """Draw a fresh labeled sample from the generating distribution."""
        return _sample_blobs(self.spec, n, rng)


def make_synthetic(
    spec: BlobsSpec, seed, pool_size: int = 400, test_size: int = 2000
) -> SyntheticTask:
    """Deterministically generate a blobs task and its true-risk oracle."""
    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    pool_ss, test_ss, hidden_ss = root.spawn(3)
    pool = _sample_blobs(spec, pool_size, np.random.default_rng(pool_ss))
    test = _sample_blobs(spec, test_size, np.random.default_rng(test_ss))
    hidden = None
    if spec.oracle_mode == "hidden":
        hidden = _sample_blobs(spec, spec.hidden_samples, np.random.default_rng(hidden_ss))
    return SyntheticTask(spec, pool, test, hidden)


def split_dataset(data: Dataset, ratio: float, seed, test: Dataset | None = None) -> DataSplit:
    """Seeded shuffle, then prefix/suffix split of the pool into S' and S.

    ratio is the prior fraction m' / (m + m'); ratio 0 leaves S' empty.  The
    test set is carried through untouched and never mixed into the split.
    """
    if not 0.0 <= ratio < 1.0:
        raise ValueError(f"ratio must lie in [0, 1), got {ratio!r}")
    if len(data) == 0:
        raise ValueError("cannot split an empty dataset")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    order = rng.permutation(len(data))
    m_prime = int(ratio * len(data))
    if len(data) - m_prime < 1:
        raise ValueError(f"ratio {ratio} leaves an empty learning sample")
    prior_idx, learn_idx = order[:m_prime], order[m_prime:]
    if test is None:
        test = Dataset(np.zeros((0, data.dim)), np.zeros(0, dtype=int), data.n_classes)
    return DataSplit(data.take(learn_idx), data.take(prior_idx), test, ratio)


@dataclass
class RunRecord:
    """One sampled hypothesis with its certificate, the unit of persistence."""

    seed: int
    config_digest: str
    family: str
    run_index: int
    alpha: float
    beta: float | None
    ratio: float
    m: int
    m_prime: int
    delta: float
    emp_risk: float
    test_risk: float
    mu_post: float
    mu_prior: float
    omega_post: float
    omega_prior: float
    risk_prime_post: float
    risk_prime_prior: float
    tau: float
    risk_upper: float
    clamped: bool
    wall_time: float
    schema_version: int = RECORD_SCHEMA_VERSION


def persist_records(records, path) -> None:
    """Write records as JSON lines with a stable key order."""
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(asdict(record), sort_keys=True, separators=(",", ":")))
            fh.write("\n")


def load_records(path) -> list[RunRecord]:
    """Round-trip of persist_records; malformed lines are reported by number."""
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                payload = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}: malformed record on line {lineno}: {exc}") from exc
            version = payload.get("schema_version")
            if version != RECORD_SCHEMA_VERSION:
                raise ValueError(
                    f"{path}: line {lineno}: schema version {version!r} "
                    f"does not match {RECORD_SCHEMA_VERSION}"
                )
            try:
                records.append(RunRecord(**payload))
            except TypeError as exc:
                raise ValueError(f"{path}: line {lineno}: bad record fields: {exc}") from exc
    return records
