"""Permutation feature importance (temporal, spatial, spectral, grids,
kernel-level) plus kernel FIR analysis and embedding diagnostics.

All PFI variants share the same RNG discipline: one independent stream per
(repeat, trial), derived from (seed, kind, repeat, trial index), advancing
cell by cell in a fixed order. Losses are baseline accuracy minus permuted
accuracy; kernel-level variants record mean absolute output deviation.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import signal as _signal

from . import stats
from .dataio import ChannelLayout, neighbourhood
from .nn import WavenetClassifier

_KIND_CODES = {
    "temporal": 1,
    "spatial": 2,
    "spatiotemporal": 3,
    "spectral": 4,
    "kernel_time": 17,
    "kernel_space": 18,
    "kernel_freq": 20,
}


@dataclass(frozen=True)
class PfiConfig:
    window_s: float = 0.1
    neighbourhood_k: int = 4
    band_hz: float = 5.0
    n_repeats: int = 10
    seed: int = 0
    time_stride: int = 1
    max_grid_cells: int = 4096

    def __post_init__(self):
        if self.window_s <= 0 or self.band_hz <= 0:
            raise ValueError("window_s and band_hz must be positive")
        if self.neighbourhood_k < 1 or self.n_repeats < 1 or self.time_stride < 1:
            raise ValueError("neighbourhood_k, n_repeats, time_stride must be >= 1")

    def window_samples(self, sfreq: float) -> int:
        w = int(round(self.window_s * sfreq))
        if w < 1:
            raise ValueError(
                f"window_s={self.window_s} is under one sample at sfreq={sfreq}"
            )
        return w


@dataclass(frozen=True)
class KernelRef:
    """One convolutional filter: (layer, output-channel index)."""

    layer: int
    kernel: int

    def validate(self, model: WavenetClassifier):
        cfg = model.config
        if not 0 <= self.layer < cfg.n_layers:
            raise ValueError(f"layer {self.layer} outside [0, {cfg.n_layers})")
        if not 0 <= self.kernel < cfg.hidden_channels:
            raise ValueError(
                f"kernel {self.kernel} outside [0, {cfg.hidden_channels})"
            )


@dataclass
class PfiResult:
    """Axis descriptors with per-repeat loss (or deviation) values."""

    kind: str
    axis: list
    values: np.ndarray  # (n_axis, n_repeats)
    baseline: float
    meta: dict = field(default_factory=dict)

    def mean(self) -> np.ndarray:
        return self.values.mean(axis=1)

    def ci(self, level: float = 0.95) -> np.ndarray:
        """(n_axis, 2) confidence bounds over repeats; degenerate if 1 repeat."""
        if self.values.shape[1] < 2:
            m = self.mean()
            return np.stack([m, m], axis=1)
        return np.array(
            [stats.confidence_interval(row, level) for row in self.values]
        )

    def standardized_mean(self) -> np.ndarray:
        """z-scored mean curve across the axis (kernel-PFI convention)."""
        m = self.mean()
        sd = m.std()
        if sd == 0:
            return np.zeros_like(m)
        return (m - m.mean()) / sd

    def to_csv(self, path, level: float = 0.95) -> None:
        mean = self.mean()
        ci = self.ci(level)
        base_kind = self.kind.removeprefix("kernel_")
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            if base_kind in ("temporal", "time"):
                writer.writerow(["time_s", "mean_loss", "ci_lo", "ci_hi"])
                for t, m, (lo, hi) in zip(self.axis, mean, ci):
                    writer.writerow([f"{t:.6f}", repr(float(m)), repr(float(lo)), repr(float(hi))])
            elif base_kind in ("spatial", "space"):
                writer.writerow(["channel", "x", "y", "mean_loss", "ci_lo", "ci_hi"])
                pos = self.meta["positions"]
                for ch, (x, y), m, (lo, hi) in zip(self.axis, pos, mean, ci):
                    writer.writerow([ch, f"{x:.6f}", f"{y:.6f}",
                                     repr(float(m)), repr(float(lo)), repr(float(hi))])
            elif base_kind in ("spectral", "freq"):
                writer.writerow(["band_lo_hz", "band_hi_hz", "mean_loss", "ci_lo", "ci_hi"])
                for (blo, bhi), m, (lo, hi) in zip(self.axis, mean, ci):
                    writer.writerow([f"{blo:.6f}", f"{bhi:.6f}",
                                     repr(float(m)), repr(float(lo)), repr(float(hi))])
            elif base_kind == "spatiotemporal":
                writer.writerow(["channel", "x", "y", "time_s",
                                 "mean_loss", "ci_lo", "ci_hi"])
                pos = self.meta["positions"]
                for (ch, t), (x, y), m, (lo, hi) in zip(self.axis, pos, mean, ci):
                    writer.writerow([ch, f"{x:.6f}", f"{y:.6f}", f"{t:.6f}",
                                     repr(float(m)), repr(float(lo)), repr(float(hi))])
            else:
                raise ValueError(f"no CSV schema for kind {self.kind!r}")


# In-place permutation primitives. Tests drive these directly with explicit
# permutations; the scan engine draws the permutations from per-trial streams.

def apply_window_channel_perm(trial, lo: int, hi: int, perm) -> None:
    """Reorder channels inside time window [lo, hi)."""
    trial[:, lo:hi] = trial[perm, lo:hi]


def apply_group_time_perm(trial, rows, tau) -> None:
    """Apply one shared time permutation to all rows of a channel group."""
    trial[np.ix_(rows, np.arange(trial.shape[1]))] = trial[np.ix_(rows, tau)]


def apply_window_time_perm(trial, rows, lo: int, hi: int, tau) -> None:
    """Shared time permutation restricted to window [lo, hi) of a group."""
    idx = np.asarray(rows)[:, None]
    trial[idx, np.arange(lo, hi)[None, :]] = trial[idx, (lo + np.asarray(tau))[None, :]]


def apply_band_perm(trial, bins, perms) -> None:
    """Permute whole rFFT coefficients within a band, per channel.

    ``perms`` is (C, n_bins) with one permutation per channel; channels whose
    permutation is the identity are left bit-identical (no FFT round trip).
    """
    bins = np.asarray(bins)
    if bins.size < 2:
        return
    ident = np.arange(bins.size)
    touched = [c for c in range(trial.shape[0]) if not np.array_equal(perms[c], ident)]
    if not touched:
        return
    spec = np.fft.rfft(trial[touched], axis=1)
    for row, c in enumerate(touched):
        spec[row, bins] = spec[row, bins[perms[c]]]
    trial[touched] = np.fft.irfft(spec, n=trial.shape[1], axis=1).astype(trial.dtype)


def _trial_stream(seed: int, kind: str, repeat: int, trial: int):
    return np.random.default_rng(
        np.random.SeedSequence(seed, spawn_key=(_KIND_CODES[kind], repeat, trial))
    )


def _scan(x, cells, cfg: PfiConfig, kind: str, apply_cell, metric):
    """Generic PFI engine: loss/deviation matrix of shape (n_cells, n_repeats)."""
    n = x.shape[0]
    values = np.zeros((len(cells), cfg.n_repeats))
    for repeat in range(cfg.n_repeats):
        streams = [_trial_stream(cfg.seed, kind, repeat, i) for i in range(n)]
        for ci, cell in enumerate(cells):
            xp = x.copy()
            for i in range(n):
                apply_cell(xp[i], cell, streams[i])
            values[ci, repeat] = metric(xp)
    return values


def _accuracy_metric(model, y, subject_idx):
    sub = subject_idx if model.config.embedding_size > 0 else None

    def metric(xp):
        return stats.accuracy(model.predict(xp, sub), y)

    return metric


def _check_eval_inputs(model, x, y):
    x = np.ascontiguousarray(np.asarray(x, dtype=np.float32))
    y = np.asarray(y)
    if x.ndim != 3:
        raise ValueError("eval trials must be (n, channels, time)")
    if y.shape != (x.shape[0],):
        raise ValueError("labels length mismatch")
    return x, y


def temporal_pfi(model: WavenetClassifier, x, y, subject_idx, sfreq: float,
                 cfg: PfiConfig, times=None) -> PfiResult:
    """Accuracy loss when channels are shuffled inside a sliding time window."""
    x, y = _check_eval_inputs(model, x, y)
    n, c, t = x.shape
    w = cfg.window_samples(sfreq)
    if w > t:
        raise ValueError(f"window of {w} samples exceeds epoch length {t}")
    if times is None:
        times = np.arange(t) / sfreq
    centers = list(range(0, t, cfg.time_stride))
    windows = []
    for center in centers:
        lo = max(0, center - w // 2)
        hi = min(t, center - w // 2 + w)
        windows.append((lo, hi))

    def apply_cell(trial, cell, rng):
        lo, hi = cell
        apply_window_channel_perm(trial, lo, hi, rng.permutation(c))

    metric = _accuracy_metric(model, y, subject_idx)
    baseline = metric(x)
    values = baseline - _scan(x, windows, cfg, "temporal", apply_cell, metric)
    return PfiResult(
        kind="temporal",
        axis=[float(times[center]) for center in centers],
        values=values,
        baseline=baseline,
        meta={"window_s": cfg.window_s, "centers": centers},
    )


GROUPINGS = ("single", "neighbourhood", "colocated")


def _channel_groups(layout: ChannelLayout, grouping: str, cfg: PfiConfig,
                    groups=None):
    if grouping == "single":
        return [(cid, [layout.index(cid)]) for cid in layout.channel_ids]
    if grouping == "neighbourhood":
        return [
            (cid, [layout.index(g) for g in neighbourhood(layout, cid, cfg.neighbourhood_k)])
            for cid in layout.channel_ids
        ]
    if grouping == "colocated":
        if not groups:
            raise ValueError("colocated grouping needs explicit channel groups")
        out = []
        for grp in groups:
            rows = [layout.index(g) for g in grp]
            out.append((grp[0], rows))
        return out
    raise ValueError(f"unknown grouping: {grouping!r}")


def spatial_pfi(model: WavenetClassifier, x, y, subject_idx,
                layout: ChannelLayout, cfg: PfiConfig,
                grouping: str = "single", groups=None) -> PfiResult:
    """Accuracy loss when a channel's (or group's) time course is shuffled."""
    x, y = _check_eval_inputs(model, x, y)
    n, c, t = x.shape
    if c != layout.n_channels:
        raise ValueError("layout does not match the trial channel count")
    cells = _channel_groups(layout, grouping, cfg, groups)

    def apply_cell(trial, cell, rng):
        _, rows = cell
        apply_group_time_perm(trial, rows, rng.permutation(t))

    metric = _accuracy_metric(model, y, subject_idx)
    baseline = metric(x)
    values = baseline - _scan(x, cells, cfg, "spatial", apply_cell, metric)
    positions = [tuple(layout.positions[layout.index(cid)]) for cid, _ in cells]
    return PfiResult(
        kind="spatial",
        axis=[cid for cid, _ in cells],
        values=values,
        baseline=baseline,
        meta={"positions": positions, "grouping": grouping},
    )


def spatiotemporal_pfi(model: WavenetClassifier, x, y, subject_idx,
                       layout: ChannelLayout, sfreq: float, cfg: PfiConfig,
                       times=None) -> PfiResult:
    """Joint (neighbourhood, time window) grid of accuracy losses."""
    x, y = _check_eval_inputs(model, x, y)
    n, c, t = x.shape
    w = cfg.window_samples(sfreq)
    if times is None:
        times = np.arange(t) / sfreq
    groups = _channel_groups(layout, "neighbourhood", cfg)
    windows = [(lo, min(lo + w, t)) for lo in range(0, t, w)]
    n_cells = len(groups) * len(windows)
    if n_cells > cfg.max_grid_cells:
        raise ValueError(
            f"spatiotemporal grid of {n_cells} cells exceeds the budget of "
            f"{cfg.max_grid_cells} (raise max_grid_cells to override)"
        )
    cells = [(cid, rows, lo, hi) for cid, rows in groups for lo, hi in windows]

    def apply_cell(trial, cell, rng):
        _, rows, lo, hi = cell
        apply_window_time_perm(trial, rows, lo, hi, rng.permutation(hi - lo))

    metric = _accuracy_metric(model, y, subject_idx)
    baseline = metric(x)
    values = baseline - _scan(x, cells, cfg, "spatiotemporal", apply_cell, metric)
    positions = [tuple(layout.positions[layout.index(cid)]) for cid, _, _, _ in cells]
    axis = [
        (cid, float(times[(lo + hi - 1) // 2])) for cid, _, lo, hi in cells
    ]
    return PfiResult(
        kind="spatiotemporal",
        axis=axis,
        values=values,
        baseline=baseline,
        meta={"positions": positions, "window_s": cfg.window_s},
    )


def default_bands(sfreq: float, band_hz: float) -> list:
    nyquist = sfreq / 2.0
    n_bands = int(math.ceil(nyquist / band_hz))
    return [
        (i * band_hz, min((i + 1) * band_hz, nyquist)) for i in range(n_bands)
    ]


def _band_bins(t: int, sfreq: float, band) -> np.ndarray:
    """rFFT bin indices inside (lo, hi], excluding DC and Nyquist bins."""
    lo, hi = band
    freqs = np.fft.rfftfreq(t, d=1.0 / sfreq)
    sel = (freqs > lo) & (freqs <= hi)
    sel[0] = False
    if t % 2 == 0:
        sel[-1] = False
    return np.flatnonzero(sel)


def spectral_pfi(model: WavenetClassifier, x, y, subject_idx, sfreq: float,
                 cfg: PfiConfig, bands=None) -> PfiResult:
    """Accuracy loss when rFFT coefficients are permuted within a band."""
    x, y = _check_eval_inputs(model, x, y)
    n, c, t = x.shape
    nyquist = sfreq / 2.0
    if bands is None:
        bands = default_bands(sfreq, cfg.band_hz)
    for lo, hi in bands:
        if lo < 0 or hi > nyquist + 1e-9 or lo >= hi:
            raise ValueError(f"band ({lo}, {hi}) outside (0, {nyquist}]")
    bin_sets = [_band_bins(t, sfreq, band) for band in bands]

    def apply_cell(trial, cell, rng):
        bins = cell
        if bins.size < 2:
            return
        perms = np.stack([rng.permutation(bins.size) for _ in range(c)])
        apply_band_perm(trial, bins, perms)

    metric = _accuracy_metric(model, y, subject_idx)
    baseline = metric(x)
    values = baseline - _scan(x, bin_sets, cfg, "spectral", apply_cell, metric)
    return PfiResult(
        kind="spectral",
        axis=[(float(lo), float(hi)) for lo, hi in bands],
        values=values,
        baseline=baseline,
        meta={"band_hz": cfg.band_hz},
    )


def kernel_pfi(model: WavenetClassifier, kernel: KernelRef, x, subject_idx,
               cfg: PfiConfig, axis: str = "time", layout: ChannelLayout = None,
               sfreq: float = None, times=None, bands=None) -> PfiResult:
    """PFI with one conv filter's mean |output deviation| as the response.

    Uses the same input perturbations as the model-level variants; the
    deviation is measured on the kernel's post-activation map.
    """
    kernel.validate(model)
    x = np.ascontiguousarray(np.asarray(x, dtype=np.float32))
    n, c, t = x.shape
    override = (
        np.zeros((n, model.config.embedding_size), dtype=np.float32)
        if model.config.embedding_size > 0 and subject_idx is None
        else None
    )
    sub = subject_idx if override is None else None

    def activation_map(xp):
        return model.conv_activations(
            xp, sub, layer=kernel.layer, embedding_override=override
        )[:, kernel.kernel, :]

    base_map = activation_map(x)

    def metric(xp):
        return float(np.abs(activation_map(xp) - base_map).mean())

    if axis == "time":
        if sfreq is None:
            raise ValueError("axis='time' needs sfreq")
        w = cfg.window_samples(sfreq)
        if times is None:
            times = np.arange(t) / sfreq
        centers = list(range(0, t, cfg.time_stride))
        cells = [(max(0, ctr - w // 2), min(t, ctr - w // 2 + w)) for ctr in centers]

        def apply_cell(trial, cell, rng):
            lo, hi = cell
            apply_window_channel_perm(trial, lo, hi, rng.permutation(c))

        values = _scan(x, cells, cfg, "kernel_time", apply_cell, metric)
        axis_out = [float(times[ctr]) for ctr in centers]
        meta = {"window_s": cfg.window_s}
    elif axis == "space":
        if layout is None:
            raise ValueError("axis='space' needs a layout")
        groups = _channel_groups(layout, "single", cfg)

        def apply_cell(trial, cell, rng):
            _, rows = cell
            apply_group_time_perm(trial, rows, rng.permutation(t))

        values = _scan(x, groups, cfg, "kernel_space", apply_cell, metric)
        axis_out = [cid for cid, _ in groups]
        meta = {"positions": [tuple(layout.positions[layout.index(cid)])
                              for cid, _ in groups]}
    elif axis == "freq":
        if sfreq is None:
            raise ValueError("axis='freq' needs sfreq")
        if bands is None:
            bands = default_bands(sfreq, cfg.band_hz)
        bin_sets = [_band_bins(t, sfreq, band) for band in bands]

        def apply_cell(trial, cell, rng):
            if cell.size < 2:
                return
            perms = np.stack([rng.permutation(cell.size) for _ in range(c)])
            apply_band_perm(trial, cell, perms)

        values = _scan(x, bin_sets, cfg, "kernel_freq", apply_cell, metric)
        axis_out = [(float(lo), float(hi)) for lo, hi in bands]
        meta = {"band_hz": cfg.band_hz}
    else:
        raise ValueError(f"unknown kernel PFI axis: {axis!r}")

    return PfiResult(
        kind=f"kernel_{axis}",
        axis=axis_out,
        values=values,
        baseline=0.0,
        meta={**meta, "layer": kernel.layer, "kernel": kernel.kernel},
    )


def kernel_fir(model: WavenetClassifier, kernel: KernelRef,
               n_noise_trials: int = 50, seed: int = 0, sfreq: float = 1.0,
               nperseg: int | None = None):
    """White-noise FIR probe: Welch PSD of one kernel's output, max-normalized.

    Returns (freqs, psd). Hann window, 50% overlap; the PSD is averaged over
    ``n_noise_trials`` independent unit-Gaussian input trials.
    """
    kernel.validate(model)
    if n_noise_trials < 1:
        raise ValueError("n_noise_trials must be >= 1")
    cfg = model.config
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(
        (n_noise_trials, cfg.n_channels, cfg.n_timesteps)
    ).astype(np.float32)
    override = (
        np.zeros((n_noise_trials, cfg.embedding_size), dtype=np.float32)
        if cfg.embedding_size > 0
        else None
    )
    out = model.conv_activations(
        noise, None, layer=kernel.layer, embedding_override=override
    )[:, kernel.kernel, :]
    npseg = min(cfg.n_timesteps, 256) if nperseg is None else nperseg
    freqs, psd = _signal.welch(
        out.astype(np.float64), fs=sfreq, window="hann", nperseg=npseg,
        noverlap=npseg // 2, detrend=False, axis=-1,
    )
    psd = psd.mean(axis=0)
    peak = psd.max()
    if peak > 0:
        psd = psd / peak
    return freqs, psd


def fir_power_theory(taps, dilation: int, freqs, sfreq: float = 1.0) -> np.ndarray:
    """Closed-form |H(w)|^2 of a causal dilated FIR filter, max-normalized.

    Tap j has delay dilation*(K-1-j) samples, matching the conv kernels'
    oldest-first tap layout.
    """
    taps = np.asarray(taps, dtype=float)
    k = len(taps)
    omega = 2.0 * np.pi * np.asarray(freqs, dtype=float) / sfreq
    h = np.zeros(len(omega), dtype=complex)
    for j, tap in enumerate(taps):
        h += tap * np.exp(-1j * omega * dilation * (k - 1 - j))
    power = np.abs(h) ** 2
    peak = power.max()
    return power / peak if peak > 0 else power


def embedding_diagnostics(model: WavenetClassifier, accuracies) -> dict:
    """Centered PCA of the embedding table, correlated with subject accuracy."""
    cfg = model.config
    if cfg.embedding_size == 0:
        raise ValueError("model has no embedding table")
    s = cfg.n_subjects
    if s < 3:
        raise ValueError("need at least 3 subjects for PCA diagnostics")
    acc = np.asarray(accuracies, dtype=float)
    if acc.shape != (s,):
        raise ValueError(f"accuracies must have length {s}")
    table = model.params["embedding"].astype(np.float64)
    centered = table - table.mean(axis=0)
    u, svals, vt = np.linalg.svd(centered, full_matrices=False)
    variances = (svals**2) / s
    scores = u * svals
    degenerate = bool(np.all(variances < 1e-12))
    correlations = []
    if not degenerate:
        for comp in range(len(svals)):
            if variances[comp] < 1e-12:
                correlations.append({"component": comp, "r": None, "p": None})
                continue
            r, p = stats.pearson_r(scores[:, comp], acc)
            correlations.append({"component": comp, "r": r, "p": p})
    return {
        "variances": variances.tolist(),
        "scores": scores.tolist(),
        "components": vt.tolist(),
        "correlations": correlations,
        "degenerate": degenerate,
    }
