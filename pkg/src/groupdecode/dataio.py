"""Epoched multi-subject datasets: synthetic generation, disk format, layout.

A dataset is a balanced collection of (subject, class) trial tensors of
shape (trials, channels, time) together with a 2D channel layout and the
sampling rate. The synthetic generator plants class-specific spatial
patterns on an oscillatory carrier inside a known time window so that
decoders and feature-importance maps can be validated against ground truth.
"""

from __future__ import annotations

import json
import math
import zlib
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

FORMAT_VERSION = 1
MANIFEST_NAME = "manifest.json"


class DatasetFormatError(ValueError):
    """Manifest/payload mismatch; ``field`` names the offending entry."""

    def __init__(self, field_name: str, message: str):
        super().__init__(message)
        self.field = field_name


@dataclass(frozen=True)
class ChannelLayout:
    """Channel identifiers with 2D sensor positions in [-1, 1]^2."""

    channel_ids: tuple
    positions: np.ndarray  # (C, 2) float

    def __post_init__(self):
        ids = tuple(self.channel_ids)
        pos = np.asarray(self.positions, dtype=float)
        object.__setattr__(self, "channel_ids", ids)
        object.__setattr__(self, "positions", pos)
        if len(set(ids)) != len(ids):
            raise ValueError("channel_ids must be unique")
        if pos.shape != (len(ids), 2):
            raise ValueError(
                f"positions shape {pos.shape} does not match {len(ids)} channels"
            )
        if not np.all(np.isfinite(pos)):
            raise ValueError("positions must be finite")

    @property
    def n_channels(self) -> int:
        return len(self.channel_ids)

    def index(self, ch) -> int:
        try:
            return self.channel_ids.index(ch)
        except ValueError:
            raise KeyError(f"unknown channel id: {ch!r}") from None


def ring_layout(n_channels: int) -> ChannelLayout:
    """Deterministic layout on concentric rings, outermost radius 0.9.

    Ring capacities grow as 6, 12, 18, ... from the centre outward; the
    outermost ring absorbs the remainder. Each ring is rotated slightly
    against its neighbour to avoid colinear spokes.
    """
    if n_channels < 1:
        raise ValueError("n_channels must be positive")
    counts = []
    remaining = n_channels
    cap = 6
    while remaining > 0:
        take = min(cap, remaining)
        counts.append(take)
        remaining -= take
        cap += 6
    width = max(2, len(str(n_channels - 1)))
    ids = tuple(f"ch{i:0{width}d}" for i in range(n_channels))
    pos = np.zeros((n_channels, 2))
    i = 0
    n_rings = len(counts)
    for ring, count in enumerate(counts):
        radius = 0.9 * (ring + 1) / n_rings
        for j in range(count):
            theta = 2.0 * math.pi * j / count + 0.35 * ring
            pos[i] = (radius * math.cos(theta), radius * math.sin(theta))
            i += 1
    return ChannelLayout(ids, pos)


def sector_channels(layout: ChannelLayout, k: int, anchor=(0.0, -0.9)) -> tuple:
    """The ``k`` channel ids closest to ``anchor``, ties broken by index.

    Used to cluster the planted-information channels in one spatial sector.
    """
    if not 1 <= k <= layout.n_channels:
        raise ValueError(f"k must be in [1, {layout.n_channels}]")
    d = np.linalg.norm(layout.positions - np.asarray(anchor, dtype=float), axis=1)
    order = np.lexsort((np.arange(layout.n_channels), d))
    return tuple(layout.channel_ids[i] for i in order[:k])


def neighbourhood(layout: ChannelLayout, ch, k: int) -> list:
    """``ch`` plus its k-1 nearest channels by Euclidean distance.

    Ties broken by ascending channel index; k=1 returns [ch].
    """
    if not 1 <= k <= layout.n_channels:
        raise ValueError(f"k must be in [1, {layout.n_channels}]")
    ci = layout.index(ch)
    d = np.linalg.norm(layout.positions - layout.positions[ci], axis=1)
    order = np.lexsort((np.arange(layout.n_channels), d))
    rest = [i for i in order if i != ci]
    picks = [ci] + rest[: k - 1]
    return [layout.channel_ids[i] for i in picks]


@dataclass(frozen=True)
class EpochedDataset:
    """Balanced per-subject, per-class trial tensors plus layout metadata.

    ``trials`` maps (subject_id, class_index) to a float32 array of shape
    (trials_per_class, n_channels, n_timesteps).
    """

    subjects: tuple
    n_classes: int
    sfreq: float
    trials: dict
    layout: ChannelLayout
    t_offset: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "subjects", tuple(self.subjects))
        self.validate()

    def validate(self):
        if not self.subjects:
            raise ValueError("need at least one subject")
        if self.n_classes < 2:
            raise ValueError("need at least 2 classes")
        if self.sfreq <= 0:
            raise ValueError("sfreq must be positive")
        expected_keys = {(s, c) for s in self.subjects for c in range(self.n_classes)}
        if set(self.trials.keys()) != expected_keys:
            raise ValueError("trials must cover every (subject, class) pair exactly")
        shape = None
        for key, arr in self.trials.items():
            if arr.ndim != 3:
                raise ValueError(f"trials{key} must be (trials, channels, time)")
            if shape is None:
                shape = arr.shape
            elif arr.shape != shape:
                raise ValueError(
                    f"unbalanced trials: {key} has shape {arr.shape}, expected {shape}"
                )
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"non-finite values in trials{key}")
        if shape[1] != self.layout.n_channels:
            raise ValueError(
                f"trial channel count {shape[1]} does not match layout "
                f"({self.layout.n_channels})"
            )

    @property
    def trials_per_class(self) -> int:
        return next(iter(self.trials.values())).shape[0]

    @property
    def n_channels(self) -> int:
        return self.layout.n_channels

    @property
    def n_timesteps(self) -> int:
        return next(iter(self.trials.values())).shape[2]

    @property
    def times(self) -> np.ndarray:
        """Sample times in seconds relative to stimulus onset."""
        return np.arange(self.n_timesteps) / self.sfreq - self.t_offset

    def subject_array(self, subject) -> tuple[np.ndarray, np.ndarray]:
        """All trials of one subject: (X (N,C,T), labels (N,)) in class order."""
        if subject not in self.subjects:
            raise KeyError(f"unknown subject: {subject!r}")
        xs, ys = [], []
        for c in range(self.n_classes):
            arr = self.trials[(subject, c)]
            xs.append(arr)
            ys.append(np.full(arr.shape[0], c, dtype=np.int64))
        return np.concatenate(xs), np.concatenate(ys)

    def equals(self, other) -> bool:
        """Bit-exact equality of payload and metadata."""
        if not isinstance(other, EpochedDataset):
            return False
        if (
            self.subjects != other.subjects
            or self.n_classes != other.n_classes
            or self.sfreq != other.sfreq
            or self.t_offset != other.t_offset
            or self.layout.channel_ids != other.layout.channel_ids
            or not np.array_equal(self.layout.positions, other.layout.positions)
        ):
            return False
        for key in self.trials:
            a = self.trials[key].astype("<f4", copy=False)
            b = other.trials[key].astype("<f4", copy=False)
            if a.tobytes() != b.tobytes():
                return False
        return True

    def select_subjects(self, subjects) -> "EpochedDataset":
        """Sub-dataset restricted to the given subjects (shared arrays)."""
        subjects = tuple(subjects)
        missing = [s for s in subjects if s not in self.subjects]
        if missing:
            raise KeyError(f"unknown subjects: {missing}")
        trials = {
            (s, c): self.trials[(s, c)]
            for s in subjects
            for c in range(self.n_classes)
        }
        return replace(self, subjects=subjects, trials=trials)


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters of the planted-structure multi-subject generator.

    Classes share an oscillatory carrier (``alpha_hz``, Hanning-windowed
    inside ``info_window`` seconds after stimulus onset) and differ only in
    their channel weight pattern over ``info_channels``. Each subject sees
    the common templates through its own orthonormal channel mixing, rotated
    away from identity by ``mixing_angle``.
    """

    n_subjects: int = 5
    n_classes: int = 8
    trials_per_class: int = 30
    n_channels: int = 32
    n_timesteps: int = 256
    sfreq: float = 250.0
    mixing_angle: float = 0.5
    info_window: tuple = (0.1, 0.2)
    info_channels: tuple | None = None  # default: sector cluster of 8
    n_info_channels: int = 8
    alpha_hz: float = 10.0
    noise_exponent: float = 1.0
    t_offset: float = 0.0
    template_amplitude: float = 1.0
    noise_amplitude: float = 1.0
    alpha_noise_amplitude: float = 0.5
    harmonic_amplitude: float = 0.35
    seed: int = 0

    def __post_init__(self):
        if min(self.n_subjects, self.n_classes, self.trials_per_class) < 1:
            raise ValueError("counts must be positive")
        if self.n_channels < 2 or self.n_timesteps < 8:
            raise ValueError("dataset dimensions too small")
        if self.sfreq <= 0:
            raise ValueError("sfreq must be positive")
        if not 0.0 <= self.mixing_angle <= math.pi / 2:
            raise ValueError("mixing_angle must be in [0, pi/2]")
        lo, hi = self.info_window
        if not 0 <= lo < hi:
            raise ValueError("info_window must satisfy 0 <= start < end")
        if (hi + self.t_offset) * self.sfreq > self.n_timesteps - 1:
            raise ValueError("info_window extends past the epoch")
        if self.info_channels is None and not (
            1 <= self.n_info_channels <= self.n_channels
        ):
            raise ValueError("n_info_channels out of range")
        if self.noise_amplitude < 0 or self.template_amplitude < 0:
            raise ValueError("amplitudes must be non-negative")

    def resolve_info_channels(self, layout: ChannelLayout) -> tuple:
        if self.info_channels is not None:
            unknown = [c for c in self.info_channels if c not in layout.channel_ids]
            if unknown:
                raise ValueError(f"info_channels not in layout: {unknown}")
            return tuple(self.info_channels)
        return sector_channels(layout, self.n_info_channels)


def _info_sample_range(spec: SyntheticSpec) -> tuple[int, int]:
    """Inclusive sample range [lo, hi] of the planted window."""
    off = int(round(spec.t_offset * spec.sfreq))
    lo = int(round(spec.info_window[0] * spec.sfreq)) + off
    hi = int(round(spec.info_window[1] * spec.sfreq)) + off
    return lo, hi


def class_templates(spec: SyntheticSpec, layout: ChannelLayout) -> np.ndarray:
    """The planted per-class signals, shape (n_classes, C, T), float64.

    Channel weight vectors are orthonormal across classes (QR of a seeded
    Gaussian) whenever n_classes <= n_info_channels, so classes are
    spatially distinguishable but share the identical temporal carrier.
    """
    rng = np.random.default_rng(np.random.SeedSequence(spec.seed).spawn(3)[0])
    info = [layout.index(c) for c in spec.resolve_info_channels(layout)]
    n_info = len(info)

    gauss = rng.standard_normal((n_info, max(spec.n_classes, 1)))
    q, r = np.linalg.qr(gauss[:, : min(n_info, spec.n_classes)])
    q *= np.sign(np.diag(r))  # fix QR sign ambiguity for determinism
    weights = np.zeros((spec.n_classes, n_info))
    weights[: q.shape[1]] = q.T
    for c in range(q.shape[1], spec.n_classes):  # overflow classes: unit vectors
        v = gauss[:, c]
        weights[c] = v / np.linalg.norm(v)

    lo, hi = _info_sample_range(spec)
    t = np.arange(spec.n_timesteps) / spec.sfreq
    carrier = np.zeros(spec.n_timesteps)
    window = np.hanning(hi - lo + 1)
    osc = np.sin(2 * math.pi * spec.alpha_hz * t[lo : hi + 1])
    osc += spec.harmonic_amplitude * np.sin(4 * math.pi * spec.alpha_hz * t[lo : hi + 1])
    carrier[lo : hi + 1] = window * osc

    templates = np.zeros((spec.n_classes, spec.n_channels, spec.n_timesteps))
    for c in range(spec.n_classes):
        templates[c, info] = spec.template_amplitude * np.outer(weights[c], carrier)
    return templates


def subject_mixing(spec: SyntheticSpec) -> np.ndarray:
    """Per-subject orthonormal mixing matrices, shape (S, C, C).

    Each matrix is a product of Givens rotations over disjoint random
    channel pairs, every pair rotated by ``mixing_angle``; angle 0 gives
    the identity for every subject.
    """
    n = spec.n_channels
    mats = np.zeros((spec.n_subjects, n, n))
    children = np.random.SeedSequence(spec.seed).spawn(3)[1].spawn(spec.n_subjects)
    for s in range(spec.n_subjects):
        rng = np.random.default_rng(children[s])
        perm = rng.permutation(n)
        m = np.eye(n)
        cos, sin = math.cos(spec.mixing_angle), math.sin(spec.mixing_angle)
        for p in range(n // 2):
            i, j = perm[2 * p], perm[2 * p + 1]
            m[i, i] = cos
            m[j, j] = cos
            m[i, j] = -sin
            m[j, i] = sin
        mats[s] = m
    return mats


def _pink_noise(rng, shape_ct: tuple[int, int], exponent: float) -> np.ndarray:
    """1/f^exponent spectrally shaped Gaussian noise, unit std per channel."""
    c, t = shape_ct
    freqs = np.fft.rfftfreq(t)
    scale = np.zeros_like(freqs)
    scale[1:] = freqs[1:] ** (-exponent / 2.0)
    coef = rng.standard_normal((c, len(freqs))) + 1j * rng.standard_normal((c, len(freqs)))
    coef *= scale
    x = np.fft.irfft(coef, n=t, axis=1)
    sd = x.std(axis=1, keepdims=True)
    sd[sd == 0] = 1.0
    return x / sd


def generate_synthetic(spec: SyntheticSpec) -> EpochedDataset:
    """Generate a planted-structure dataset, deterministic in ``spec.seed``.

    Every trial is ``M_s @ (template_c + noise)`` where the noise is 1/f
    background plus an alpha-band sinusoid with random phase per channel.
    """
    layout = ring_layout(spec.n_channels)
    templates = class_templates(spec, layout)
    mixing = subject_mixing(spec)
    subjects = tuple(f"s{idx:02d}" for idx in range(spec.n_subjects))

    noise_root = np.random.SeedSequence(spec.seed).spawn(3)[2]
    subject_seeds = noise_root.spawn(spec.n_subjects)
    t = np.arange(spec.n_timesteps) / spec.sfreq

    trials = {}
    for s, subject in enumerate(subjects):
        rng = np.random.default_rng(subject_seeds[s])
        m = mixing[s]
        for c in range(spec.n_classes):
            block = np.empty(
                (spec.trials_per_class, spec.n_channels, spec.n_timesteps),
                dtype=np.float32,
            )
            for k in range(spec.trials_per_class):
                noise = _pink_noise(
                    rng, (spec.n_channels, spec.n_timesteps), spec.noise_exponent
                )
                phase = rng.uniform(0, 2 * math.pi, size=(spec.n_channels, 1))
                noise += spec.alpha_noise_amplitude * np.sin(
                    2 * math.pi * spec.alpha_hz * t[None, :] + phase
                )
                x = m @ (templates[c] + spec.noise_amplitude * noise)
                block[k] = x.astype(np.float32)
            trials[(subject, c)] = block
    return EpochedDataset(
        subjects=subjects,
        n_classes=spec.n_classes,
        sfreq=spec.sfreq,
        trials=trials,
        layout=layout,
        t_offset=spec.t_offset,
    )


def _subject_filename(subject) -> str:
    return f"sub-{subject}.f32"


def write_dataset(ds: EpochedDataset, path) -> None:
    """Write ``manifest.json`` plus one little-endian float32 file per subject.

    Payload order per subject file is [class][trial][channel][time], row
    major; a CRC32 of each payload is recorded in the manifest.
    """
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    files = {}
    for subject in ds.subjects:
        stacked = np.stack(
            [ds.trials[(subject, c)] for c in range(ds.n_classes)]
        ).astype("<f4")
        payload = stacked.tobytes()
        name = _subject_filename(subject)
        (path / name).write_bytes(payload)
        files[str(subject)] = {"file": name, "crc32": zlib.crc32(payload)}
    manifest = {
        "format_version": FORMAT_VERSION,
        "n_subjects": len(ds.subjects),
        "n_classes": ds.n_classes,
        "trials_per_class": ds.trials_per_class,
        "n_channels": ds.n_channels,
        "n_timesteps": ds.n_timesteps,
        "sfreq": ds.sfreq,
        "t_offset": ds.t_offset,
        "subjects": [str(s) for s in ds.subjects],
        "layout": {
            str(cid): [float(x), float(y)]
            for cid, (x, y) in zip(ds.layout.channel_ids, ds.layout.positions)
        },
        "files": files,
    }
    (path / MANIFEST_NAME).write_text(json.dumps(manifest, indent=1))


def _require(manifest: dict, key: str):
    if key not in manifest:
        raise DatasetFormatError(key, f"manifest missing field '{key}'")
    return manifest[key]


def read_dataset(path) -> EpochedDataset:
    """Read a dataset directory, validating shapes and checksums."""
    path = Path(path)
    mpath = path / MANIFEST_NAME
    if not mpath.is_file():
        raise DatasetFormatError("manifest", f"no {MANIFEST_NAME} under {path}")
    try:
        manifest = json.loads(mpath.read_text())
    except json.JSONDecodeError as e:
        raise DatasetFormatError("manifest", f"manifest is not valid JSON: {e}") from e

    version = _require(manifest, "format_version")
    if version != FORMAT_VERSION:
        raise DatasetFormatError(
            "format_version", f"unsupported format_version {version}"
        )
    n_subjects = _require(manifest, "n_subjects")
    n_classes = _require(manifest, "n_classes")
    tpc = _require(manifest, "trials_per_class")
    n_channels = _require(manifest, "n_channels")
    n_timesteps = _require(manifest, "n_timesteps")
    sfreq = _require(manifest, "sfreq")
    t_offset = _require(manifest, "t_offset")
    subjects = _require(manifest, "subjects")
    layout_map = _require(manifest, "layout")
    files = _require(manifest, "files")

    if len(subjects) != n_subjects:
        raise DatasetFormatError(
            "subjects",
            f"subject count mismatch: manifest lists {len(subjects)}, "
            f"n_subjects={n_subjects}",
        )
    if len(layout_map) != n_channels:
        raise DatasetFormatError(
            "layout",
            f"layout length mismatch: {len(layout_map)} entries for "
            f"n_channels={n_channels}",
        )
    layout = ChannelLayout(
        tuple(layout_map.keys()),
        np.array(list(layout_map.values()), dtype=float),
    )

    expected_bytes = n_classes * tpc * n_channels * n_timesteps * 4
    trials = {}
    for subject in subjects:
        entry = files.get(subject)
        if entry is None:
            raise DatasetFormatError("files", f"no file entry for subject '{subject}'")
        fpath = path / entry["file"]
        if not fpath.is_file():
            raise DatasetFormatError("files", f"missing payload file {entry['file']}")
        payload = fpath.read_bytes()
        if len(payload) != expected_bytes:
            raise DatasetFormatError(
                "payload",
                f"payload size mismatch for subject '{subject}': expected "
                f"{expected_bytes} bytes, found {len(payload)}",
            )
        if zlib.crc32(payload) != entry["crc32"]:
            raise DatasetFormatError(
                "crc32", f"checksum mismatch for subject '{subject}'"
            )
        arr = np.frombuffer(payload, dtype="<f4").reshape(
            n_classes, tpc, n_channels, n_timesteps
        )
        for c in range(n_classes):
            trials[(subject, c)] = arr[c].copy()
    return EpochedDataset(
        subjects=tuple(subjects),
        n_classes=n_classes,
        sfreq=float(sfreq),
        trials=trials,
        layout=layout,
        t_offset=float(t_offset),
    )
