"""Epoch containers, spatial covariance estimation, subject file I/O, and
a synthetic multi-subject generator with planted spatial structure.

An epoch is a C×T float64 matrix of band-passed EEG samples. Band-passed
signals are zero-mean per channel, so X @ X.T is used directly as the
spatial second-moment estimate without re-centering. Per-epoch covariances
are trace-normalized before averaging so that epochs of different amplitude
contribute equally.

Subject files (extension ``.eegx``) are little-endian binary::

    magic "EEGX" (4 B) | version u8 = 1 | C u32 | T u32 | N_epochs u32
    | id_len u32 | id_len UTF-8 bytes
    then per epoch: label u8 in {0, 1} | C*T float32 samples, row-major

Samples are stored as float32 and promoted to float64 in memory.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.linalg

from . import kernels
from .errors import (
    ConfigError,
    DegenerateEpochError,
    DimensionError,
    EmptyClassError,
    FormatError,
    LabelError,
    ZeroWeightError,
)

MAGIC = b"EEGX"
FORMAT_VERSION = 1

_SYM_RTOL = 1e-12
_PSD_RTOL = 1e-10
_TRACE_ATOL = 1e-12


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr, dtype=np.float64)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class Epoch:
    """One C×T matrix of filtered EEG samples."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 2:
            raise DimensionError(f"epoch data must be 2-D, got shape {arr.shape}")
        c, t = arr.shape
        if c < 2 or t < 2:
            raise ConfigError(f"epoch needs C >= 2 and T >= 2, got {c}x{t}")
        if not np.all(np.isfinite(arr)):
            raise ConfigError("epoch contains non-finite samples")
        object.__setattr__(self, "data", _freeze(arr))

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def samples(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class LabeledEpoch:
    epoch: Epoch
    label: int

    def __post_init__(self):
        if self.label not in (0, 1):
            raise ConfigError(f"label must be 0 or 1, got {self.label!r}")


@dataclass(frozen=True)
class SubjectDataset:
    """All labeled epochs of one subject, in recording order."""

    subject_id: str
    epochs: tuple[LabeledEpoch, ...]

    def __post_init__(self):
        epochs = tuple(self.epochs)
        if not epochs:
            raise ConfigError(f"dataset {self.subject_id!r} has no epochs")
        c, t = epochs[0].epoch.data.shape
        for k, le in enumerate(epochs):
            if le.epoch.data.shape != (c, t):
                raise DimensionError(
                    f"dataset {self.subject_id!r}: epoch {k} has shape "
                    f"{le.epoch.data.shape}, expected {(c, t)}"
                )
        object.__setattr__(self, "epochs", epochs)

    @property
    def channels(self) -> int:
        return self.epochs[0].epoch.channels

    @property
    def samples(self) -> int:
        return self.epochs[0].epoch.samples

    def __len__(self) -> int:
        return len(self.epochs)

    @cached_property
    def data(self) -> np.ndarray:
        """(N, C, T) stack of all epochs."""
        return _freeze(np.stack([le.epoch.data for le in self.epochs]))

    @cached_property
    def labels(self) -> np.ndarray:
        arr = np.array([le.label for le in self.epochs], dtype=np.int64)
        arr.flags.writeable = False
        return arr


@dataclass(frozen=True)
class SpatialCovariance:
    """C×C symmetric PSD matrix; ``normalized`` means unit trace."""

    matrix: np.ndarray
    normalized: bool

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DimensionError(f"covariance must be square, got {m.shape}")
        scale = np.max(np.abs(m)) if m.size else 0.0
        if scale > 0.0 and np.max(np.abs(m - m.T)) > _SYM_RTOL * scale:
            raise ConfigError("covariance is not symmetric")
        if not np.all(np.isfinite(m)):
            raise ConfigError("covariance contains non-finite entries")
        tr = float(np.trace(m))
        min_eig = float(np.linalg.eigvalsh(m)[0])
        if min_eig < -_PSD_RTOL * max(tr, 0.0):
            raise ConfigError(f"covariance is not PSD (min eigenvalue {min_eig:g})")
        if self.normalized and abs(tr - 1.0) > _TRACE_ATOL:
            raise ConfigError(f"normalized covariance must have unit trace, got {tr!r}")
        object.__setattr__(self, "matrix", _freeze(m))

    @property
    def channels(self) -> int:
        return self.matrix.shape[0]


def epoch_covariance(epoch: Epoch, normalize: bool = True) -> SpatialCovariance:
    """Spatial second moment X @ X.T of one epoch.

    With ``normalize`` the matrix is divided by its trace, which fails on an
    all-zero epoch.
    """
    covs, traces = kernels.epoch_covariances(epoch.data[None, :, :], normalize)
    if normalize and traces[0] <= 0.0:
        raise DegenerateEpochError("cannot trace-normalize a zero epoch")
    return SpatialCovariance(covs[0], normalized=bool(normalize))


def _mean_cov_from_stack(cov_stack: np.ndarray, weights: np.ndarray) -> np.ndarray:
    acc, total = kernels.weighted_mean_mats(cov_stack, weights)
    if total <= 0.0:
        raise ZeroWeightError("total weight is zero")
    return acc / total


def class_mean_covariance(
    epochs: Sequence[LabeledEpoch],
    label: int,
    weights: Sequence[float] | None = None,
) -> SpatialCovariance:
    """Weighted Euclidean mean of the trace-normalized covariances of one class."""
    if label not in (0, 1):
        raise ConfigError(f"label must be 0 or 1, got {label!r}")
    if weights is None:
        w = np.ones(len(epochs))
    else:
        w = np.asarray(weights, dtype=np.float64)
        if w.shape != (len(epochs),):
            raise DimensionError("one weight per epoch required")
        if np.any(w < 0.0):
            raise ConfigError("weights must be nonnegative")
    mask = np.array([le.label == label for le in epochs], dtype=bool)
    if not mask.any():
        raise EmptyClassError(f"no epoch of class {label}")
    data = np.stack([le.epoch.data for le in epochs])[mask]
    cov_stack, traces = kernels.epoch_covariances(data, True)
    if np.any(traces <= 0.0):
        raise DegenerateEpochError("cannot trace-normalize a zero epoch")
    mean = _mean_cov_from_stack(cov_stack, w[mask])
    return SpatialCovariance(mean, normalized=True)


# ---------------------------------------------------------------------------
# subject file I/O
# ---------------------------------------------------------------------------

_HEADER = struct.Struct("<4sBIII")


def save_subject(dataset: SubjectDataset, path) -> None:
    """Write a dataset in the EEGX binary format."""
    sid = dataset.subject_id.encode("utf-8")
    c, t = dataset.channels, dataset.samples
    parts = [
        _HEADER.pack(MAGIC, FORMAT_VERSION, c, t, len(dataset)),
        struct.pack("<I", len(sid)),
        sid,
    ]
    for le in dataset.epochs:
        parts.append(struct.pack("<B", le.label))
        parts.append(le.epoch.data.astype("<f4").tobytes(order="C"))
    Path(path).write_bytes(b"".join(parts))


def load_subject(path) -> SubjectDataset:
    """Read a dataset from the EEGX binary format.

    Raises FormatError naming the byte offset of the first violation.
    """
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise FormatError(f"truncated header at byte offset {len(raw)} in {path}")
    magic, version, c, t, n_epochs = _HEADER.unpack_from(raw, 0)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r} at byte offset 0 in {path}")
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported version {version} at byte offset 4 in {path}")
    off = _HEADER.size
    if len(raw) < off + 4:
        raise FormatError(f"truncated subject id length at byte offset {len(raw)} in {path}")
    (id_len,) = struct.unpack_from("<I", raw, off)
    off += 4
    if len(raw) < off + id_len:
        raise FormatError(f"truncated subject id at byte offset {len(raw)} in {path}")
    try:
        subject_id = raw[off : off + id_len].decode("utf-8")
    except UnicodeDecodeError as exc:
        raise FormatError(f"subject id is not UTF-8 at byte offset {off} in {path}") from exc
    off += id_len

    epoch_bytes = 4 * c * t
    epochs = []
    for k in range(n_epochs):
        if len(raw) < off + 1 + epoch_bytes:
            raise FormatError(
                f"truncated epoch {k} at byte offset {len(raw)} in {path}"
            )
        label = raw[off]
        if label not in (0, 1):
            raise LabelError(f"label byte {label} at byte offset {off} in {path}")
        off += 1
        samples = np.frombuffer(raw, dtype="<f4", count=c * t, offset=off)
        off += epoch_bytes
        epochs.append(
            LabeledEpoch(Epoch(samples.astype(np.float64).reshape(c, t)), int(label))
        )
    if off != len(raw):
        raise FormatError(f"trailing data at byte offset {off} in {path}")
    return SubjectDataset(subject_id, tuple(epochs))


# ---------------------------------------------------------------------------
# synthetic generator
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SynthConfig:
    """Parameters of the planted-structure generator.

    Latent channel 1 has variance ``sigma_hi_sq`` under class 0 and
    ``sigma_lo_sq`` under class 1; latent channel 2 the reverse; the
    remaining C-2 latents have variance ``noise_floor`` under both classes.
    Subject mixing matrices are a shared random orthogonal matrix rotated
    per subject by an angle scaled by ``divergence`` (radians).
    """

    num_subjects: int
    channels: int
    samples: int
    epochs_per_class: int
    sigma_hi_sq: float
    sigma_lo_sq: float
    divergence: float
    noise_floor: float
    seed: int

    def __post_init__(self):
        if self.num_subjects < 1 or self.epochs_per_class < 1:
            raise ConfigError("counts must be >= 1")
        if self.channels < 2:
            raise ConfigError("need at least the two discriminative channels")
        if self.samples < 2:
            raise ConfigError("need samples >= 2")
        if not (self.sigma_hi_sq > self.sigma_lo_sq > 0.0):
            raise ConfigError("need sigma_hi_sq > sigma_lo_sq > 0")
        if self.divergence < 0.0:
            raise ConfigError("divergence must be >= 0")
        if self.noise_floor < 0.0:
            raise ConfigError("noise_floor must be >= 0")


@dataclass(frozen=True)
class SubjectGroundTruth:
    """Planted mixing structure of one synthetic subject."""

    mixing: np.ndarray
    unmixing: np.ndarray

    @property
    def discriminative_filters(self) -> np.ndarray:
        """(2, C) unmixing rows of the class-dependent latents."""
        return self.unmixing[:2]


def _random_orthogonal(rng: np.random.Generator, c: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((c, c)))
    return q * np.sign(np.diag(r))


def generate_synthetic_with_truth(
    config: SynthConfig,
) -> tuple[list[SubjectDataset], list[SubjectGroundTruth]]:
    """Deterministic synthetic subjects plus their planted mixing matrices."""
    rng = np.random.default_rng(config.seed)
    c, t = config.channels, config.samples
    base = _random_orthogonal(rng, c)

    class_vars = np.full((2, c), config.noise_floor)
    class_vars[0, 0] = class_vars[1, 1] = config.sigma_hi_sq
    class_vars[0, 1] = class_vars[1, 0] = config.sigma_lo_sq
    class_stds = np.sqrt(class_vars)

    datasets = []
    truths = []
    for z in range(config.num_subjects):
        if config.divergence > 0.0:
            g = rng.standard_normal((c, c))
            g = 0.5 * (g - g.T)
            g /= np.linalg.norm(g, 2)
            mixing = scipy.linalg.expm(config.divergence * g) @ base
        else:
            mixing = base
        epochs = []
        for _ in range(config.epochs_per_class):
            for label in (0, 1):
                latents = rng.standard_normal((c, t)) * class_stds[label][:, None]
                epochs.append(LabeledEpoch(Epoch(mixing @ latents), label))
        datasets.append(SubjectDataset(f"S{z + 1:02d}", tuple(epochs)))
        # Mixing matrices are orthogonal by construction.
        truths.append(SubjectGroundTruth(_freeze(mixing), _freeze(mixing.T)))
    return datasets, truths


def generate_synthetic(config: SynthConfig) -> list[SubjectDataset]:
    """Deterministic synthetic multi-subject corpus."""
    return generate_synthetic_with_truth(config)[0]
