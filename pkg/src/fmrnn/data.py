"""Feature files, dataset manifests, synthetic data and segment correlations."""
from __future__ import annotations

import json
import os
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import expm

from .errors import (BadMagic, ConfigError, DatasetError, HeaderMismatch, MissingFeatureFile,
                     NonFiniteFeature, ShapeError)
from .numcore import make_rng

FEATURE_MAGIC = b"FMF1"
_HEADER = struct.Struct("<4sII")


@dataclass
class FeatureSequence:
    video_id: str
    label: int
    frames: np.ndarray

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim != 2 or self.frames.shape[0] < 1:
            raise ShapeError(f"{self.video_id}: frames must be a (T, d) matrix with T >= 1")
        bad = ~np.isfinite(self.frames)
        if bad.any():
            row = int(np.argwhere(bad)[0, 0])
            raise NonFiniteFeature(f"video {self.video_id}: non-finite value in row {row}")

    @property
    def T(self) -> int:
        return self.frames.shape[0]

    @property
    def d(self) -> int:
        return self.frames.shape[1]


@dataclass
class ManifestEntry:
    video_id: str
    label: int
    path: str
    T: int


@dataclass
class DatasetManifest:
    name: str
    d: int
    class_names: list
    entries: list
    splits: dict = field(default_factory=lambda: {"train": [], "val": [], "test": []})

    def to_dict(self) -> dict:
        return {"name": self.name, "d": self.d, "class_names": list(self.class_names),
                "entries": [asdict(e) for e in self.entries], "splits": self.splits}

    @classmethod
    def from_dict(cls, obj: dict) -> "DatasetManifest":
        entries = [ManifestEntry(e["video_id"], int(e["label"]), e["path"], int(e["T"]))
                   for e in obj["entries"]]
        splits = obj.get("splits") or {"train": [], "val": [], "test": []}
        return cls(obj["name"], int(obj["d"]), list(obj["class_names"]), entries, splits)


# ---------------------------------------------------------------------------
# feature files
# ---------------------------------------------------------------------------

def write_features(path, frames) -> None:
    """Binary ``FMF1`` file, or comma-separated text for .csv/.txt paths."""
    frames = np.asarray(frames)
    if frames.ndim != 2:
        raise ShapeError("frames must be a (T, d) matrix")
    path = Path(path)
    if path.suffix in (".csv", ".txt"):
        np.savetxt(path, frames, delimiter=",", fmt="%.17g")
        return
    T, d = frames.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(FEATURE_MAGIC, T, d))
        fh.write(np.ascontiguousarray(frames, dtype="<f4").tobytes())


def read_features(path, video_id: str | None = None) -> np.ndarray:
    path = Path(path)
    who = video_id or path.name
    if not path.exists():
        raise MissingFeatureFile(f"feature file for {who} not found: {path}")
    if path.suffix in (".csv", ".txt"):
        try:
            frames = np.loadtxt(path, delimiter=",", ndmin=2, dtype=np.float64)
        except ValueError as exc:
            raise DatasetError(f"{path}: unparseable text features ({exc})") from None
    else:
        raw = path.read_bytes()
        if len(raw) < _HEADER.size or raw[:4] != FEATURE_MAGIC:
            raise BadMagic(f"{path}: not an FMF1 feature file")
        _, T, d = _HEADER.unpack_from(raw)
        body = raw[_HEADER.size:]
        if len(body) != 4 * T * d:
            raise HeaderMismatch(
                f"{path}: header says {T}x{d} but holds {len(body) // 4} values")
        frames = np.frombuffer(body, dtype="<f4").reshape(T, d).astype(np.float64)
    bad = ~np.isfinite(frames)
    if bad.any():
        row = int(np.argwhere(bad)[0, 0])
        raise NonFiniteFeature(f"video {who} ({path}): non-finite value in row {row}")
    return frames


def save_dataset(directory, sequences, name: str = "dataset", class_names=None,
                 splits: dict | None = None, fmt: str = "bin") -> Path:
    """Write one feature file per video plus ``manifest.json``; returns its path."""
    directory = Path(directory)
    (directory / "features").mkdir(parents=True, exist_ok=True)
    ds = {s.d for s in sequences}
    if len(ds) != 1:
        raise ShapeError(f"inconsistent feature widths {sorted(ds)}")
    n_classes = max(s.label for s in sequences) + 1
    class_names = list(class_names or [f"class_{c}" for c in range(n_classes)])
    ext = ".fmf" if fmt == "bin" else ".csv"
    entries = []
    for seq in sequences:
        rel = f"features/{seq.video_id}{ext}"
        write_features(directory / rel, seq.frames)
        entries.append(ManifestEntry(seq.video_id, int(seq.label), rel, seq.T))
    manifest = DatasetManifest(name, ds.pop(), class_names, entries,
                               splits or {"train": [s.video_id for s in sequences],
                                          "val": [], "test": []})
    path = directory / "manifest.json"
    path.write_text(json.dumps(manifest.to_dict(), indent=1) + "\n")
    return path


def load_dataset(manifest_path):
    """Read a manifest and every feature file it lists.

    Returns ``(sequences, manifest)``; stored T and d are cross-checked
    against each file.
    """
    manifest_path = Path(manifest_path)
    if not manifest_path.exists():
        raise MissingFeatureFile(f"manifest not found: {manifest_path}")
    try:
        manifest = DatasetManifest.from_dict(json.loads(manifest_path.read_text()))
    except (ValueError, KeyError, TypeError) as exc:
        raise DatasetError(f"{manifest_path}: malformed manifest ({exc})") from None
    root = manifest_path.parent
    sequences = []
    for e in manifest.entries:
        frames = read_features(root / e.path, e.video_id)
        if frames.shape != (e.T, manifest.d):
            raise HeaderMismatch(
                f"{e.path}: manifest says {e.T}x{manifest.d}, file holds "
                f"{frames.shape[0]}x{frames.shape[1]}")
        sequences.append(FeatureSequence(e.video_id, e.label, frames))
    return sequences, manifest


def select_split(sequences, manifest: DatasetManifest, split: str):
    ids = set(manifest.splits.get(split, []))
    return [s for s in sequences if s.video_id in ids]


# ---------------------------------------------------------------------------
# synthetic data
# ---------------------------------------------------------------------------

@dataclass
class SynthSpec:
    """Blockwise-correlated videos with class-specific latent dynamics.

    Each block of ``block_size`` coordinates follows one latent scalar:
    ``z_{t+1} = A_c z_t + offset_c + latent_noise``, and coordinate ``j`` of
    the block is ``gain_j * z + shift_j + noise``.  ``A_c = rho * expm(K_c)``
    with a random skew-symmetric ``K_c`` scaled by ``mixing``, so its
    spectral radius is exactly ``rho``.  Neighbouring blocks' initial states
    and class offsets are correlated with coefficient ``block_corr``.
    """

    n_classes: int = 4
    d: int = 64
    n_frames: int = 30
    videos_per_class: int = 50
    block_size: int = 8
    noise: float = 0.05
    latent_noise: float = 0.0
    init_scale: float = 0.5
    offset_sep: float = 0.15
    rho: float = 1.0
    mixing: float = 0.0
    block_corr: float = 0.7
    gain_spread: float = 0.2
    shift_spread: float = 0.1
    bimodal: tuple | None = None
    split_fracs: tuple = (0.7, 0.0, 0.3)
    seed: int = 0

    def validate(self) -> None:
        if self.n_classes < 1 or self.n_frames < 1 or self.videos_per_class < 1:
            raise ConfigError("class, frame and video counts must be positive")
        if self.block_size < 1 or self.d % self.block_size:
            raise ConfigError(f"block size {self.block_size} must divide d={self.d}")
        if not 0 <= self.rho <= 1:
            raise ConfigError("spectral radius rho must lie in [0, 1]")
        if min(self.noise, self.latent_noise, self.init_scale, self.offset_sep) < 0:
            raise ConfigError("scales must be non-negative")
        if abs(sum(self.split_fracs) - 1.0) > 1e-9:
            raise ConfigError("split fractions must sum to 1")
        if self.bimodal is not None and len(self.bimodal) != 2:
            raise ConfigError("bimodal payload is a pair (v1, v2)")


def _block_correlated(rng, n_rows, n_blocks, corr):
    """Rows of unit-variance Gaussians with AR(1) correlation across blocks."""
    out = np.empty((n_rows, n_blocks))
    out[:, 0] = rng.standard_normal(n_rows)
    scale = np.sqrt(1.0 - corr * corr)
    for m in range(1, n_blocks):
        out[:, m] = corr * out[:, m - 1] + scale * rng.standard_normal(n_rows)
    return out


def class_dynamics(spec: SynthSpec):
    """Per-class (transition matrices, offsets) and per-coordinate (gain, shift)."""
    spec.validate()
    rng = make_rng([spec.seed, 1])
    M = spec.d // spec.block_size
    A = np.empty((spec.n_classes, M, M))
    for c in range(spec.n_classes):
        K = rng.standard_normal((M, M))
        A[c] = spec.rho * expm(spec.mixing * (K - K.T) / 2.0)
    offsets = _block_correlated(rng, spec.n_classes, M, spec.block_corr)
    if spec.n_classes > 1:
        diff = offsets[:, None, :] - offsets[None, :, :]
        dist = np.sqrt((diff ** 2).sum(-1))
        min_dist = dist[~np.eye(spec.n_classes, dtype=bool)].min()
        offsets *= spec.offset_sep / min_dist
    else:
        offsets *= spec.offset_sep
    gains = 1.0 + rng.uniform(-spec.gain_spread, spec.gain_spread, spec.d)
    shifts = rng.uniform(-spec.shift_spread, spec.shift_spread, spec.d)
    return A, offsets, gains, shifts


def synth_generate(spec: SynthSpec):
    """Return ``(sequences, manifest)`` for the synthetic dataset described by spec."""
    A, offsets, gains, shifts = class_dynamics(spec)
    rng = make_rng([spec.seed, 2])
    M = spec.d // spec.block_size
    block_of = np.arange(spec.d) // spec.block_size
    sequences = []
    for c in range(spec.n_classes):
        for v in range(spec.videos_per_class):
            z = spec.init_scale * _block_correlated(rng, 1, M, spec.block_corr)[0]
            lat = np.empty((spec.n_frames, M))
            for t in range(spec.n_frames):
                lat[t] = z
                z = A[c] @ z + offsets[c] + spec.latent_noise * rng.standard_normal(M)
            frames = gains * lat[:, block_of] + shifts
            frames = frames + spec.noise * rng.standard_normal(frames.shape)
            if spec.bimodal is not None:
                pick = rng.integers(0, 2, spec.n_frames)
                frames = frames + np.asarray(spec.bimodal, dtype=np.float64)[pick][:, None]
            # round to the 32-bit storage precision so files reload bit-exactly
            frames = frames.astype(np.float32).astype(np.float64)
            sequences.append(FeatureSequence(f"c{c:02d}_v{v:04d}", c, frames))

    split_rng = make_rng([spec.seed, 3])
    splits = {"train": [], "val": [], "test": []}
    for c in range(spec.n_classes):
        ids = [s.video_id for s in sequences if s.label == c]
        ids = [ids[i] for i in split_rng.permutation(len(ids))]
        n_train = int(round(spec.split_fracs[0] * len(ids)))
        n_val = int(round(spec.split_fracs[1] * len(ids)))
        splits["train"] += sorted(ids[:n_train])
        splits["val"] += sorted(ids[n_train:n_train + n_val])
        splits["test"] += sorted(ids[n_train + n_val:])
    entries = [ManifestEntry(s.video_id, s.label, f"features/{s.video_id}.fmf", s.T)
               for s in sequences]
    manifest = DatasetManifest("synthetic", spec.d,
                               [f"class_{c}" for c in range(spec.n_classes)], entries, splits)
    return sequences, manifest


def write_synthetic(directory, spec: SynthSpec) -> Path:
    sequences, manifest = synth_generate(spec)
    return save_dataset(directory, sequences, name="synthetic",
                        class_names=manifest.class_names, splits=manifest.splits)


# ---------------------------------------------------------------------------
# correlation analysis
# ---------------------------------------------------------------------------

def _stack_frames(dataset) -> np.ndarray:
    if isinstance(dataset, np.ndarray):
        return np.atleast_2d(np.asarray(dataset, dtype=np.float64))
    return np.vstack([s.frames for s in dataset])


def correlation_matrix(dataset, D: int) -> np.ndarray:
    """Pearson correlation between contiguous D-blocks, diagonal set to zero.

    Block ``a``'s samples are all its scalars over every frame and position;
    block ``a`` and block ``b`` are paired by (frame, position).
    """
    X = _stack_frames(dataset)
    F, d = X.shape
    if D < 1 or d % D:
        raise ConfigError(f"D={D} must divide d={d}")
    if F < 2:
        raise ConfigError("need at least two frames")
    M = d // D
    blocks = X.reshape(F, M, D).transpose(1, 0, 2).reshape(M, F * D)
    centred = blocks - blocks.mean(axis=1, keepdims=True)
    norms = np.sqrt((centred ** 2).sum(axis=1))
    zero = np.flatnonzero(norms <= 1e-12 * max(1.0, np.abs(blocks).max()))
    if zero.size:
        raise DatasetError(f"block {int(zero[0])} (coordinates {zero[0] * D}..{zero[0] * D + D - 1})"
                           f" has zero variance")
    unit = centred / norms[:, None]
    C = np.clip(unit @ unit.T, -1.0, 1.0)
    C = 0.5 * (C + C.T)
    np.fill_diagonal(C, 0.0)
    return C


def avg_correlation_vs_stepsize(dataset, D_values):
    """[(D, mean |off-diagonal correlation|)] for each step size (nan when D = d)."""
    X = _stack_frames(dataset)
    curve = []
    for D in D_values:
        C = correlation_matrix(X, int(D))
        M = C.shape[0]
        value = float(np.abs(C).sum() / (M * (M - 1))) if M > 1 else float("nan")
        curve.append((int(D), value))
    return curve
