"""Per-channel standardisation, per-subject PCA whitening, and split plans.

Statistics are always fitted on the training split and applied to the whole
dataset so validation trials never leak into the fit. Standardisation uses
population (divide-by-N) variance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataio import EpochedDataset


@dataclass(frozen=True)
class SplitPlan:
    """Per (subject, class) train/validation trial indices.

    ``fold_id`` is None for holdout plans and the fold number in k-fold mode.
    """

    train: dict  # (subject, class) -> int ndarray
    val: dict
    fold_id: int | None = None

    def __post_init__(self):
        if set(self.train.keys()) != set(self.val.keys()):
            raise ValueError("train and val must cover the same (subject, class) keys")
        for key in self.train:
            tr, va = np.asarray(self.train[key]), np.asarray(self.val[key])
            if np.intersect1d(tr, va).size:
                raise ValueError(f"train/val overlap for {key}")

    def indices(self, subject, cls, which: str) -> np.ndarray:
        store = {"train": self.train, "val": self.val}[which]
        return np.asarray(store[(subject, cls)])


def make_splits(ds: EpochedDataset, mode: str = "holdout", k: int = 5, seed: int = 0):
    """Stratified 4:1 holdout plan, or a list of k disjoint-validation folds.

    Every (subject, class) trial list is shuffled with its own derived RNG
    stream, so plans are deterministic in ``seed`` and identical dataset
    shapes give identical index layouts.
    """
    tpc = ds.trials_per_class
    if mode not in ("holdout", "kfold"):
        raise ValueError(f"unknown split mode: {mode!r}")
    if mode == "holdout" and tpc % 5 != 0:
        raise ValueError(
            f"trials_per_class={tpc} not divisible into a 4:1 split (need multiple of 5)"
        )
    if mode == "kfold" and tpc < k:
        raise ValueError(f"trials_per_class={tpc} < k={k} folds")

    root = np.random.SeedSequence(seed)
    keys = [(s, c) for s in ds.subjects for c in range(ds.n_classes)]
    streams = root.spawn(len(keys))
    perms = {
        key: np.random.default_rng(ss).permutation(tpc)
        for key, ss in zip(keys, streams)
    }

    if mode == "holdout":
        n_val = tpc // 5
        train = {key: np.sort(p[n_val:]) for key, p in perms.items()}
        val = {key: np.sort(p[:n_val]) for key, p in perms.items()}
        return SplitPlan(train=train, val=val)

    folds = []
    chunks = {key: np.array_split(p, k) for key, p in perms.items()}
    for fold in range(k):
        val = {key: np.sort(chunks[key][fold]) for key in keys}
        train = {
            key: np.sort(np.concatenate([chunks[key][j] for j in range(k) if j != fold]))
            for key in keys
        }
        folds.append(SplitPlan(train=train, val=val, fold_id=fold))
    return folds


@dataclass(frozen=True)
class ChannelStats:
    """Per-subject, per-channel mean/std fitted on training trials."""

    subjects: tuple
    mean: np.ndarray  # (S, C)
    std: np.ndarray  # (S, C)

    def to_json(self) -> dict:
        return {
            "subjects": [str(s) for s in self.subjects],
            "mean": self.mean.tolist(),
            "std": self.std.tolist(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ChannelStats":
        return cls(
            subjects=tuple(obj["subjects"]),
            mean=np.asarray(obj["mean"], dtype=float),
            std=np.asarray(obj["std"], dtype=float),
        )


def fit_channel_stats(ds: EpochedDataset, plan: SplitPlan) -> ChannelStats:
    """Mean and population std per (subject, channel) over the train split."""
    mean = np.zeros((len(ds.subjects), ds.n_channels))
    std = np.zeros_like(mean)
    for si, subject in enumerate(ds.subjects):
        pooled = np.concatenate(
            [
                ds.trials[(subject, c)][plan.indices(subject, c, "train")]
                for c in range(ds.n_classes)
            ]
        )  # (n_train, C, T)
        flat = pooled.transpose(1, 0, 2).reshape(ds.n_channels, -1).astype(np.float64)
        mean[si] = flat.mean(axis=1)
        std[si] = flat.std(axis=1)
        bad = np.flatnonzero(std[si] == 0)
        if bad.size:
            raise ValueError(
                f"zero-variance channel {ds.layout.channel_ids[bad[0]]!r} "
                f"for subject {subject!r}"
            )
    return ChannelStats(subjects=ds.subjects, mean=mean, std=std)


def apply_channel_stats(ds: EpochedDataset, stats: ChannelStats) -> EpochedDataset:
    if stats.subjects != ds.subjects:
        raise ValueError("stats fitted on different subjects")
    trials = {}
    for si, subject in enumerate(ds.subjects):
        m = stats.mean[si][None, :, None]
        s = stats.std[si][None, :, None]
        for c in range(ds.n_classes):
            arr = ds.trials[(subject, c)]
            # float64 arithmetic, cast back so the payload dtype is preserved
            trials[(subject, c)] = ((arr - m) / s).astype(arr.dtype, copy=False)
    return EpochedDataset(
        subjects=ds.subjects,
        n_classes=ds.n_classes,
        sfreq=ds.sfreq,
        trials=trials,
        layout=ds.layout,
        t_offset=ds.t_offset,
    )


def standardize_channels(ds: EpochedDataset, plan: SplitPlan) -> EpochedDataset:
    """Standardise every channel per subject using train-split statistics."""
    return apply_channel_stats(ds, fit_channel_stats(ds, plan))


@dataclass(frozen=True)
class WhiteningTransform:
    """Mean vector and projection matrix mapping channels to unit covariance."""

    mean: np.ndarray  # (C,)
    projection: np.ndarray  # (C, C), rows = scaled principal axes

    def to_json(self) -> dict:
        return {"mean": self.mean.tolist(), "projection": self.projection.tolist()}

    @classmethod
    def from_json(cls, obj: dict) -> "WhiteningTransform":
        return cls(
            mean=np.asarray(obj["mean"], dtype=float),
            projection=np.asarray(obj["projection"], dtype=float),
        )


def fit_whitening(trials: np.ndarray, rank_tol: float = 1e-10) -> WhiteningTransform:
    """PCA whitening over channels, keeping all components.

    ``trials`` is (n_trials, C, T); time samples pooled across trials form
    the observations. Rank-deficient covariance raises (no regularisation).
    """
    trials = np.asarray(trials, dtype=np.float64)
    if trials.ndim != 3:
        raise ValueError("trials must be (n_trials, channels, time)")
    n, c, t = trials.shape
    if n * t < c + 1:
        raise ValueError(f"need at least {c + 1} pooled samples, got {n * t}")
    flat = trials.transpose(1, 0, 2).reshape(c, -1)
    mean = flat.mean(axis=1)
    centered = flat - mean[:, None]
    cov = centered @ centered.T / centered.shape[1]
    evals, evecs = np.linalg.eigh(cov)
    if evals[0] <= rank_tol * max(evals[-1], rank_tol):
        raise ValueError(
            f"rank-deficient covariance (min eigenvalue {evals[0]:.3e}); "
            "whitening keeps all components and does not regularize"
        )
    projection = (evecs / np.sqrt(evals)).T  # rows: eigvec_i / sqrt(lambda_i)
    return WhiteningTransform(mean=mean, projection=projection)


def apply_whitening(transform: WhiteningTransform, trials: np.ndarray) -> np.ndarray:
    trials = np.asarray(trials)
    single = trials.ndim == 2
    if single:
        trials = trials[None]
    out = np.einsum(
        "pc,nct->npt", transform.projection, trials - transform.mean[None, :, None]
    ).astype(trials.dtype)
    return out[0] if single else out


def whiten_dataset(ds: EpochedDataset, plan: SplitPlan) -> EpochedDataset:
    """Per-subject whitening fitted on train trials, applied to all trials."""
    trials = {}
    for subject in ds.subjects:
        fit_pool = np.concatenate(
            [
                ds.trials[(subject, c)][plan.indices(subject, c, "train")]
                for c in range(ds.n_classes)
            ]
        )
        tf = fit_whitening(fit_pool)
        for c in range(ds.n_classes):
            trials[(subject, c)] = apply_whitening(tf, ds.trials[(subject, c)])
    return EpochedDataset(
        subjects=ds.subjects,
        n_classes=ds.n_classes,
        sfreq=ds.sfreq,
        trials=trials,
        layout=ds.layout,
        t_offset=ds.t_offset,
    )
