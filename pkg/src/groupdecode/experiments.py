"""Training protocols: subject-level, group, embedding-aided group models,
finetuning from a group initialisation, leave-one-subject-out sweeps,
sub-group scaling curves, k-fold CV, and embedding ablations.

All runs are deterministic in (dataset, split plan, spec, seed); RNG streams
for model init, batch shuffling, and dropout are derived from the spec seed
via named spawn keys.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from . import stats
from .dataio import EpochedDataset
from .nn import Adam, ModelConfig, WavenetClassifier, cross_entropy
from .preprocess import SplitPlan, make_splits, standardize_channels

MODES = ("subject", "group", "group_emb")


@dataclass(frozen=True)
class TrainSpec:
    """Optimisation protocol: mode, budget, batch size, learning rate."""

    mode: str
    linear: bool = False
    epochs: int = 200
    lr: float = 1e-4
    batch_size: int = 59
    seed: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.epochs < 0 or self.lr <= 0 or self.batch_size < 1:
            raise ValueError("invalid epochs/lr/batch_size")

    @classmethod
    def paper_defaults(cls, mode: str, linear: bool = False, seed: int = 0) -> "TrainSpec":
        """Published hyperparameters: 500/2000 epochs, batch 590/59, lr 1e-4/5e-5."""
        return cls(
            mode=mode,
            linear=linear,
            epochs=500 if linear else 2000,
            lr=5e-5 if mode == "subject" else 1e-4,
            batch_size=59 if mode == "subject" else 590,
            seed=seed,
        )


def default_model_config(
    ds: EpochedDataset,
    mode: str,
    linear: bool = False,
    n_layers: int | None = None,
    hidden_channels: int = 128,
    fc_hidden: int = 512,
    dropout: float | None = None,
    embedding_size: int = 10,
    downsample: str = "mean",
) -> ModelConfig:
    """Architecture defaults per mode: L=3/p=0.7 subject, L=6/p=0.4 group."""
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    subject_level = mode == "subject"
    return ModelConfig(
        n_channels=ds.n_channels,
        n_classes=ds.n_classes,
        n_timesteps=ds.n_timesteps,
        n_layers=n_layers if n_layers is not None else (3 if subject_level else 6),
        hidden_channels=hidden_channels,
        fc_hidden=fc_hidden,
        dropout=dropout if dropout is not None else (0.7 if subject_level else 0.4),
        embedding_size=embedding_size if mode == "group_emb" else 0,
        n_subjects=len(ds.subjects),
        activation="identity" if linear else "asinh",
        downsample=downsample,
    )


@dataclass
class ExperimentReport:
    """Per-subject accuracies plus raw predictions and provenance."""

    mode: str
    seed: int
    config_hash: str
    per_subject: dict
    mean_accuracy: float
    curves: dict = field(default_factory=dict)
    predictions: dict = field(default_factory=dict)
    labels: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {
            "mode": self.mode,
            "seed": self.seed,
            "config_hash": self.config_hash,
            "per_subject": {str(k): v for k, v in self.per_subject.items()},
            "mean_accuracy": self.mean_accuracy,
            "curves": self.curves,
            "predictions": {str(k): v for k, v in self.predictions.items()},
            "labels": {str(k): v for k, v in self.labels.items()},
            "extra": self.extra,
        }

    def save(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_json_dict(), f, sort_keys=True, indent=1)


def config_hash(*objs) -> str:
    blob = json.dumps(objs, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def chance_level(ds: EpochedDataset) -> float:
    return 1.0 / ds.n_classes


def assemble(ds: EpochedDataset, plan: SplitPlan, subjects=None, which: str = "train"):
    """Pooled (X, labels, subject indices) for the given split.

    Subject indices are positions in ``ds.subjects`` so embedding rows stay
    aligned no matter which subset is assembled.
    """
    subjects = ds.subjects if subjects is None else tuple(subjects)
    xs, ys, ss = [], [], []
    for subject in subjects:
        sidx = ds.subjects.index(subject)
        for c in range(ds.n_classes):
            idx = plan.indices(subject, c, which)
            if idx.size == 0:
                continue
            arr = ds.trials[(subject, c)][idx]
            xs.append(arr)
            ys.append(np.full(arr.shape[0], c, dtype=np.int64))
            ss.append(np.full(arr.shape[0], sidx, dtype=np.int64))
    if not xs:
        c, t = ds.n_channels, ds.n_timesteps
        return (
            np.empty((0, c, t), dtype=np.float32),
            np.empty(0, dtype=np.int64),
            np.empty(0, dtype=np.int64),
        )
    return (
        np.concatenate(xs).astype(np.float32),
        np.concatenate(ys),
        np.concatenate(ss),
    )


def _fit(model: WavenetClassifier, x, y, subject_idx, epochs: int, lr: float,
         batch_size: int, rng) -> dict:
    """Adam training loop with per-epoch shuffled minibatches."""
    n = x.shape[0]
    if n == 0 or epochs == 0:
        return {"loss": [], "train_accuracy": []}
    if batch_size > n:
        raise ValueError(
            f"batch_size {batch_size} exceeds the {n} available training trials"
        )
    uses_embedding = model.config.embedding_size > 0
    optimizer = Adam(model.parameters(), lr=lr)
    losses, accs = [], []
    for _ in range(epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        correct = 0
        for lo in range(0, n, batch_size):
            sel = order[lo : lo + batch_size]
            sub = subject_idx[sel] if uses_embedding else None
            loss, grads, logits = model.loss_and_grads(x[sel], y[sel], sub, rng=rng)
            optimizer.step(grads)
            epoch_loss += loss * sel.size
            correct += int((logits.argmax(axis=1) == y[sel]).sum())
        losses.append(epoch_loss / n)
        accs.append(correct / n)
    return {"loss": losses, "train_accuracy": accs}


def evaluate_model(model, ds: EpochedDataset, plan: SplitPlan, subjects=None,
                   which: str = "val"):
    """Per-subject accuracy with stored predictions.

    ``model`` is either a shared model or a {subject: model} dict from
    subject-level training.
    """
    subjects = ds.subjects if subjects is None else tuple(subjects)
    per_subject, predictions, labels = {}, {}, {}
    for subject in subjects:
        m = model[subject] if isinstance(model, dict) else model
        x, y, sidx = assemble(ds, plan, [subject], which)
        sub = sidx if m.config.embedding_size > 0 else None
        pred = m.predict(x, sub)
        per_subject[subject] = stats.accuracy(pred, y)
        predictions[subject] = pred.tolist()
        labels[subject] = y.tolist()
    return per_subject, predictions, labels


def _rng(seed: int, *key) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(key)))


def _seed_int(seed: int, *key) -> int:
    return int(np.random.SeedSequence(seed, spawn_key=tuple(key)).generate_state(1)[0])


def train(ds: EpochedDataset, plan: SplitPlan, spec: TrainSpec,
          config: ModelConfig | None = None, subjects=None):
    """Train per ``spec.mode`` and report per-subject validation accuracy.

    Returns (model or {subject: model}, ExperimentReport). ``subjects``
    restricts the training pool (used by LOSO and sub-group runs);
    evaluation covers the trained subjects.
    """
    subjects = ds.subjects if subjects is None else tuple(subjects)
    if config is None:
        config = default_model_config(ds, spec.mode, spec.linear)
    chash = config_hash(asdict(spec), config.to_dict())

    if spec.mode == "subject":
        models = {}
        curves = {}
        for subject in subjects:
            scfg = config
            if scfg.embedding_size > 0:
                raise ValueError("subject mode does not use embeddings")
            x, y, _ = assemble(ds, plan, [subject], "train")
            m = WavenetClassifier(scfg, seed=_seed_int(spec.seed, 0, ds.subjects.index(subject)))
            fit_rng = _rng(spec.seed, 1, ds.subjects.index(subject))
            curves[subject] = _fit(m, x, y, None, spec.epochs, spec.lr,
                                   spec.batch_size, fit_rng)
            models[subject] = m
        per_subject, preds, labels = evaluate_model(models, ds, plan, subjects)
        report = ExperimentReport(
            mode=spec.mode, seed=spec.seed, config_hash=chash,
            per_subject=per_subject,
            mean_accuracy=float(np.mean(list(per_subject.values()))),
            curves={str(s): curves[s] for s in subjects},
            predictions=preds, labels=labels,
        )
        return models, report

    if spec.mode == "group_emb" and config.embedding_size == 0:
        raise ValueError("group_emb mode requires embedding_size > 0")
    x, y, sidx = assemble(ds, plan, subjects, "train")
    model = WavenetClassifier(config, seed=_seed_int(spec.seed, 0, 0))
    curves = _fit(model, x, y, sidx, spec.epochs, spec.lr, spec.batch_size,
                  _rng(spec.seed, 1, 0))
    per_subject, preds, labels = evaluate_model(model, ds, plan, subjects)
    report = ExperimentReport(
        mode=spec.mode, seed=spec.seed, config_hash=chash,
        per_subject=per_subject,
        mean_accuracy=float(np.mean(list(per_subject.values()))),
        curves=curves, predictions=preds, labels=labels,
    )
    return model, report


def finetune(model: WavenetClassifier, ds: EpochedDataset, plan: SplitPlan,
             subject, epochs: int, lr: float = 5e-5,
             batch_size: int | None = None, seed: int = 0,
             fraction: float = 1.0):
    """Continue training a (copy of a) trained model on one subject's data.

    ``fraction`` keeps only the leading share of each class's train indices
    (stratified), enabling training-ratio sweeps; 0 means no training at all
    (zero-shot evaluation). Returns (finetuned model, ExperimentReport).
    """
    if subject not in ds.subjects:
        raise KeyError(f"unknown subject: {subject!r}")
    if not 0.0 <= fraction <= 1.0:
        raise ValueError("fraction must be in [0, 1]")
    tuned = model.copy()
    sub_plan_train = {}
    for c in range(ds.n_classes):
        idx = plan.indices(subject, c, "train")
        sub_plan_train[c] = idx[: int(np.floor(fraction * idx.size))]
    xs, ys = [], []
    for c, idx in sub_plan_train.items():
        if idx.size:
            xs.append(ds.trials[(subject, c)][idx])
            ys.append(np.full(idx.size, c, dtype=np.int64))
    if xs and epochs > 0:
        x = np.concatenate(xs).astype(np.float32)
        y = np.concatenate(ys)
        sidx = np.full(x.shape[0], ds.subjects.index(subject), dtype=np.int64)
        bs = min(59, x.shape[0]) if batch_size is None else batch_size
        curves = _fit(tuned, x, y, sidx if tuned.config.embedding_size > 0 else None,
                      epochs, lr, bs, _rng(seed, 2, ds.subjects.index(subject)))
    else:
        curves = {"loss": [], "train_accuracy": []}
    per_subject, preds, labels = evaluate_model(tuned, ds, plan, [subject])
    report = ExperimentReport(
        mode="finetune", seed=seed,
        config_hash=config_hash(tuned.config.to_dict(), epochs, lr, fraction),
        per_subject=per_subject, mean_accuracy=per_subject[subject],
        curves=curves, predictions=preds, labels=labels,
        extra={"subject": str(subject), "fraction": fraction, "epochs": epochs},
    )
    return tuned, report


LOSO_VARIANTS = ("group", "group_emb", "subject_scratch")


def loso_run(ds: EpochedDataset, plan: SplitPlan, left_out, ratios,
             variant: str, pretrain_spec: TrainSpec | None = None,
             config: ModelConfig | None = None, finetune_epochs: int = 100,
             finetune_lr: float = 5e-5, scratch_spec: TrainSpec | None = None,
             seed: int = 0, pretrained: WavenetClassifier | None = None) -> dict:
    """Accuracy of one left-out subject across training-set ratios.

    Group variants pretrain on the remaining subjects (the left-out
    embedding row keeps its random initialisation) and then finetune per
    ratio; ``subject_scratch`` trains a fresh subject-level model per ratio.
    Evaluation is always the left-out subject's full validation split.
    """
    if len(ds.subjects) < 2:
        raise ValueError("LOSO needs at least 2 subjects")
    if variant not in LOSO_VARIANTS:
        raise ValueError(f"variant must be one of {LOSO_VARIANTS}")
    if left_out not in ds.subjects:
        raise KeyError(f"unknown subject: {left_out!r}")
    ratios = [float(r) for r in ratios]
    if any(not 0.0 <= r <= 1.0 for r in ratios):
        raise ValueError("ratios must lie in [0, 1]")
    others = [s for s in ds.subjects if s != left_out]

    out = {
        "left_out": str(left_out),
        "variant": variant,
        "ratios": ratios,
        "accuracy": [],
        "predictions": {},
        "labels": None,
    }

    if variant in ("group", "group_emb"):
        if pretrained is None:
            spec = pretrain_spec or TrainSpec(mode=variant, seed=seed)
            pretrained, _ = train(ds, plan, spec, config=config, subjects=others)
        for ri, ratio in enumerate(ratios):
            tuned, rep = finetune(
                pretrained, ds, plan, left_out, epochs=finetune_epochs,
                lr=finetune_lr, seed=_seed_int(seed, 3, ri), fraction=ratio,
            )
            out["accuracy"].append(rep.per_subject[left_out])
            out["predictions"][str(ratio)] = rep.predictions[left_out]
            out["labels"] = rep.labels[left_out]
    else:
        spec = scratch_spec or TrainSpec(mode="subject", lr=5e-5, seed=seed)
        scfg = config or default_model_config(ds, "subject")
        for ri, ratio in enumerate(ratios):
            m = WavenetClassifier(scfg, seed=_seed_int(seed, 4, ri))
            xs, ys = [], []
            for c in range(ds.n_classes):
                idx = plan.indices(left_out, c, "train")
                idx = idx[: int(np.floor(ratio * idx.size))]
                if idx.size:
                    xs.append(ds.trials[(left_out, c)][idx])
                    ys.append(np.full(idx.size, c, dtype=np.int64))
            if xs and spec.epochs > 0:
                x = np.concatenate(xs).astype(np.float32)
                y = np.concatenate(ys)
                bs = min(spec.batch_size, x.shape[0])
                _fit(m, x, y, None, spec.epochs, spec.lr, bs, _rng(seed, 5, ri))
            per_subject, preds, labels = evaluate_model(m, ds, plan, [left_out])
            out["accuracy"].append(per_subject[left_out])
            out["predictions"][str(ratio)] = preds[left_out]
            out["labels"] = labels[left_out]
    return out


def loso_sweep(ds: EpochedDataset, plan: SplitPlan, ratios, variants=LOSO_VARIANTS,
               **kwargs) -> dict:
    """loso_run over every subject; returns {variant: {subject: run dict}}."""
    return {
        variant: {
            str(s): loso_run(ds, plan, s, ratios, variant, **kwargs)
            for s in ds.subjects
        }
        for variant in variants
    }


def subgroup_scaling(ds: EpochedDataset, plan: SplitPlan, spec: TrainSpec,
                     config: ModelConfig | None = None, order=None) -> dict:
    """Accuracy-vs-number-of-subjects curves for embedding-aided models.

    Mode (b) averages over the n trained subjects' validation accuracy;
    mode (a) averages over all S subjects, substituting chance accuracy for
    the untrained ones.
    """
    order = list(ds.subjects) if order is None else list(order)
    if sorted(order) != sorted(ds.subjects):
        raise ValueError("order must be a permutation of the dataset subjects")
    chance = chance_level(ds)
    s_total = len(ds.subjects)
    result = {"n": [], "mode_a": [], "mode_b": [], "per_subject": []}
    for n in range(1, s_total + 1):
        subset = order[:n]
        # batch size must not exceed the subset's training pool
        pool = sum(
            plan.indices(s, c, "train").size for s in subset for c in range(ds.n_classes)
        )
        run_spec = TrainSpec(mode=spec.mode, linear=spec.linear, epochs=spec.epochs,
                             lr=spec.lr, batch_size=min(spec.batch_size, pool),
                             seed=_seed_int(spec.seed, 6, n))
        _, rep = train(ds, plan, run_spec, config=config, subjects=subset)
        acc_b = float(np.mean([rep.per_subject[s] for s in subset]))
        acc_a = float(
            (sum(rep.per_subject[s] for s in subset) + (s_total - n) * chance) / s_total
        )
        result["n"].append(n)
        result["mode_a"].append(acc_a)
        result["mode_b"].append(acc_b)
        result["per_subject"].append({str(s): rep.per_subject[s] for s in subset})
    return result


def kfold_cv(ds: EpochedDataset, spec: TrainSpec, config: ModelConfig | None = None,
             k: int = 5, seed: int = 0, standardize: bool = True) -> dict:
    """k-fold cross-validation; standardisation is refit inside each fold."""
    plans = make_splits(ds, mode="kfold", k=k, seed=seed)
    fold_accs = []
    reports = []
    for plan in plans:
        ds_f = standardize_channels(ds, plan) if standardize else ds
        fold_spec = TrainSpec(mode=spec.mode, linear=spec.linear, epochs=spec.epochs,
                              lr=spec.lr, batch_size=spec.batch_size,
                              seed=_seed_int(spec.seed, 7, plan.fold_id))
        _, rep = train(ds_f, plan, fold_spec, config=config)
        fold_accs.append(rep.mean_accuracy)
        reports.append(rep)
    lo, hi = stats.confidence_interval(fold_accs)
    return {
        "fold_accuracies": fold_accs,
        "mean_accuracy": float(np.mean(fold_accs)),
        "ci95": [lo, hi],
        "reports": reports,
    }


def embedding_ablation(model: WavenetClassifier, ds: EpochedDataset,
                       plan: SplitPlan, mode: str = "zero",
                       permutation=None, seed: int = 0, which: str = "val") -> dict:
    """Evaluate with embeddings zeroed or subject->row assignment shuffled."""
    if model.config.embedding_size == 0:
        raise ValueError("model has no embeddings to ablate")
    if mode not in ("zero", "shuffle"):
        raise ValueError(f"unknown ablation mode: {mode!r}")
    ablated = model.copy()
    table = ablated.params["embedding"]
    if mode == "zero":
        table[...] = 0.0
    else:
        if permutation is None:
            permutation = _rng(seed, 8).permutation(table.shape[0])
        permutation = np.asarray(permutation)
        if sorted(permutation.tolist()) != list(range(table.shape[0])):
            raise ValueError("permutation must be a permutation of row indices")
        table[...] = table[permutation]
    base_per_subject, _, _ = evaluate_model(model, ds, plan, which=which)
    abl_per_subject, preds, labels = evaluate_model(ablated, ds, plan, which=which)
    return {
        "mode": mode,
        "per_subject": abl_per_subject,
        "mean_accuracy": float(np.mean(list(abl_per_subject.values()))),
        "baseline_per_subject": base_per_subject,
        "baseline_mean": float(np.mean(list(base_per_subject.values()))),
        "predictions": preds,
        "labels": labels,
    }
