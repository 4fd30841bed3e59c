"""SVG figure rendering for PFI curves, sensor maps, and training curves."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .dataio import ChannelLayout
from .interpret import PfiResult


def _save(fig, path):
    fig.savefig(path, format="svg")
    plt.close(fig)


def plot_curve(xs, mean, lo, hi, path, xlabel: str = "", ylabel: str = "",
               title: str = "") -> None:
    """Generic mean curve with a confidence band."""
    xs = np.asarray(xs, dtype=float)
    fig, ax = plt.subplots(figsize=(6, 3.2))
    ax.plot(xs, mean, lw=1.5)
    if lo is not None and hi is not None:
        ax.fill_between(xs, lo, hi, alpha=0.3, lw=0)
    ax.axhline(0.0, color="k", lw=0.5, alpha=0.5)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    _save(fig, path)


def plot_pfi_curve(result: PfiResult, path, xlabel: str | None = None) -> None:
    """Mean loss curve with CI band; x axis from the result's axis values."""
    mean = result.mean()
    ci = result.ci()
    if result.kind in ("temporal", "kernel_time"):
        xs = np.asarray(result.axis, dtype=float)
        xl = xlabel or "time (s)"
    elif result.kind in ("spectral", "kernel_freq"):
        xs = np.array([(lo + hi) / 2.0 for lo, hi in result.axis])
        xl = xlabel or "frequency (Hz)"
    else:
        xs = np.arange(len(result.axis), dtype=float)
        xl = xlabel or "cell"
    fig, ax = plt.subplots(figsize=(6, 3.2))
    ax.plot(xs, mean, lw=1.5)
    ax.fill_between(xs, ci[:, 0], ci[:, 1], alpha=0.3, lw=0)
    ax.axhline(0.0, color="k", lw=0.5, alpha=0.5)
    ax.set_xlabel(xl)
    ax.set_ylabel("accuracy loss" if not result.kind.startswith("kernel") else "deviation")
    ax.set_title(f"{result.kind} PFI (baseline {result.baseline:.3f})")
    fig.tight_layout()
    _save(fig, path)


def plot_sensor_map(result: PfiResult, layout: ChannelLayout, path) -> None:
    """Channel losses as colored circles at their layout positions."""
    if "positions" not in result.meta:
        raise ValueError("result carries no channel positions")
    pos = np.asarray(result.meta["positions"], dtype=float)
    mean = result.mean()
    fig, ax = plt.subplots(figsize=(4.5, 4.5))
    sc = ax.scatter(pos[:, 0], pos[:, 1], c=mean, s=160, cmap="viridis",
                    edgecolors="k", linewidths=0.5)
    fig.colorbar(sc, ax=ax, label="accuracy loss")
    for (x, y), cid in zip(pos, result.axis):
        ax.annotate(str(cid), (x, y), fontsize=5, ha="center", va="center")
    ax.set_xlim(-1.05, 1.05)
    ax.set_ylim(-1.05, 1.05)
    ax.set_aspect("equal")
    ax.set_title(f"{result.kind} PFI map")
    fig.tight_layout()
    _save(fig, path)


def plot_training_curves(curves: dict, path) -> None:
    """Loss and train-accuracy traces from an ExperimentReport curve dict."""
    fig, axes = plt.subplots(1, 2, figsize=(8, 3))
    loss = curves.get("loss", [])
    acc = curves.get("train_accuracy", [])
    axes[0].plot(loss)
    axes[0].set_xlabel("epoch")
    axes[0].set_ylabel("train loss")
    axes[1].plot(acc)
    axes[1].set_xlabel("epoch")
    axes[1].set_ylabel("train accuracy")
    fig.tight_layout()
    _save(fig, path)


def plot_fir(freqs, psd, path, theory=None) -> None:
    """Measured kernel PSD, optionally with the closed-form curve overlaid."""
    fig, ax = plt.subplots(figsize=(5, 3))
    ax.plot(freqs, psd, label="measured")
    if theory is not None:
        ax.plot(freqs, theory, "--", label="theory")
        ax.legend()
    ax.set_xlabel("frequency (Hz)")
    ax.set_ylabel("normalized PSD")
    fig.tight_layout()
    _save(fig, path)


def plot_accuracy_bars(per_subject: dict, path, chance: float | None = None) -> None:
    subjects = list(per_subject.keys())
    values = [per_subject[s] for s in subjects]
    fig, ax = plt.subplots(figsize=(max(4, 0.6 * len(subjects)), 3))
    ax.bar(range(len(subjects)), values)
    if chance is not None:
        ax.axhline(chance, color="r", ls="--", lw=1, label="chance")
        ax.legend()
    ax.set_xticks(range(len(subjects)))
    ax.set_xticklabels([str(s) for s in subjects], rotation=45, fontsize=7)
    ax.set_ylabel("validation accuracy")
    fig.tight_layout()
    _save(fig, path)
