"""Command-line interface: generate data, train, finetune, run experiment
sweeps, compute feature importance, and render reports.

Config precedence is defaults < --config file < flags; the merged config is
written into every run directory together with the results, so any run can
be reproduced from its directory alone. GROUPDECODE_SEED provides a global
seed fallback when neither flag nor file sets one.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import zlib
from pathlib import Path

import numpy as np

from . import dataio, experiments, interpret, preprocess, stats
from .nn import ModelConfig, backend_name, load_checkpoint, save_checkpoint

DESK_GEN = {
    "subjects": 5,
    "classes": 8,
    "trials": 30,
    "channels": 32,
    "timesteps": 256,
    "sfreq": 250.0,
    "mixing_angle": 0.5,
}

# Desk-scale training presets keep runs in the minutes on one CPU core.
DESK_TRAIN = {
    "epochs": 60,
    "lr": 2e-3,
    "batch_size": 96,
    "hidden": 16,
    "fc_hidden": 128,
    "embedding_size": 10,
}

PAPER_TRAIN = {
    "epochs": 2000,
    "lr": 1e-4,
    "batch_size": 590,
    "hidden": 128,
    "fc_hidden": 512,
    "embedding_size": 10,
}


class CliError(ValueError):
    pass


def _seed_default(merged: dict) -> int:
    if merged.get("seed") is not None:
        return int(merged["seed"])
    env = os.environ.get("GROUPDECODE_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise CliError(f"GROUPDECODE_SEED is not an integer: {env!r}") from None
    return 0


def _merge_config(args: argparse.Namespace, defaults: dict) -> dict:
    """defaults < config file < explicit flags."""
    merged = dict(defaults)
    cfg_path = getattr(args, "config", None)
    if cfg_path:
        try:
            file_cfg = json.loads(Path(cfg_path).read_text())
        except FileNotFoundError:
            raise CliError(f"config file not found: {cfg_path}") from None
        except json.JSONDecodeError as e:
            raise CliError(f"config file is not valid JSON: {e}") from None
        unknown = set(file_cfg) - set(defaults) - {"seed"}
        if unknown:
            raise CliError(f"unknown config keys: {sorted(unknown)}")
        merged.update(file_cfg)
    for key in list(defaults) + ["seed"]:
        val = getattr(args, key, None)
        if val is not None:
            merged[key] = val
    merged["seed"] = _seed_default(merged)
    return merged


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_config(out: Path, command: str, merged: dict) -> None:
    payload = {"command": command, **merged}
    (out / "config.json").write_text(json.dumps(payload, sort_keys=True, indent=1))


def _load_dataset(path) -> dataio.EpochedDataset:
    if path is None:
        raise CliError("--data is required")
    return dataio.read_dataset(path)


def _prepared(ds, merged):
    """Holdout split + preprocessing according to the merged config."""
    plan = preprocess.make_splits(ds, mode="holdout", seed=merged["split_seed"])
    pre = merged.get("preprocess", "standardize")
    if pre == "standardize":
        ds = preprocess.standardize_channels(ds, plan)
    elif pre == "whiten":
        ds = preprocess.standardize_channels(ds, plan)
        ds = preprocess.whiten_dataset(ds, plan)
    elif pre != "none":
        raise CliError(f"unknown preprocess choice: {pre!r}")
    return ds, plan


def _model_config(ds, merged, mode: str) -> ModelConfig:
    return experiments.default_model_config(
        ds,
        mode,
        linear=bool(merged.get("linear")),
        n_layers=merged.get("layers"),
        hidden_channels=merged["hidden"],
        fc_hidden=merged["fc_hidden"],
        dropout=merged.get("dropout"),
        embedding_size=merged["embedding_size"],
    )


def _train_spec(merged: dict, mode: str) -> experiments.TrainSpec:
    return experiments.TrainSpec(
        mode=mode,
        linear=bool(merged.get("linear")),
        epochs=merged["epochs"],
        lr=merged["lr"],
        batch_size=merged["batch_size"],
        seed=merged["seed"],
    )


def _train_defaults(preset: str) -> dict:
    base = dict(PAPER_TRAIN if preset == "paper" else DESK_TRAIN)
    base.update(
        {
            "mode": "group_emb",
            "linear": False,
            "layers": None,
            "dropout": None,
            "preprocess": "standardize",
            "split_seed": 0,
        }
    )
    return base


def cmd_gen(args) -> int:
    defaults = dict(DESK_GEN)
    defaults["preset"] = "desk"
    merged = _merge_config(args, defaults)
    if merged["preset"] != "desk":
        raise CliError(
            "gen only supports --preset desk; the paper preset applies to "
            "training hyperparameters, not data generation"
        )
    out = _outdir(args)
    spec = dataio.SyntheticSpec(
        n_subjects=int(merged["subjects"]),
        n_classes=int(merged["classes"]),
        trials_per_class=int(merged["trials"]),
        n_channels=int(merged["channels"]),
        n_timesteps=int(merged["timesteps"]),
        sfreq=float(merged["sfreq"]),
        mixing_angle=float(merged["mixing_angle"]),
        # the informative cluster cannot exceed the montage
        n_info_channels=min(8, int(merged["channels"])),
        seed=merged["seed"],
    )
    ds = dataio.generate_synthetic(spec)
    dataio.write_dataset(ds, out)
    _write_config(out, "gen", merged)
    manifest = json.loads((out / "manifest.json").read_text())
    digest = zlib.crc32(
        json.dumps(manifest["files"], sort_keys=True).encode()
    )
    print(f"wrote dataset to {out} (payload crc {digest:08x})")
    return 0


def cmd_train(args) -> int:
    merged = _merge_config(args, _train_defaults(args.preset or "desk"))
    ds = _load_dataset(args.data)
    ds, plan = _prepared(ds, merged)
    mode = merged["mode"]
    spec = _train_spec(merged, mode)
    config = _model_config(ds, merged, mode)
    model, report = experiments.train(ds, plan, spec, config=config)
    out = _outdir(args)
    _write_config(out, "train", merged)
    report.save(out / "report.json")
    if isinstance(model, dict):
        for subject, m in model.items():
            save_checkpoint(out / f"model_{subject}.ckpt", m)
    else:
        save_checkpoint(out / "model.ckpt", model)
    with open(out / "accuracy.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["subject", "accuracy"])
        for subject, acc in report.per_subject.items():
            writer.writerow([subject, repr(float(acc))])
    print(f"mean validation accuracy {report.mean_accuracy:.4f} "
          f"(chance {experiments.chance_level(ds):.4f}, backend {backend_name()})")
    return 0


def cmd_finetune(args) -> int:
    defaults = _train_defaults(args.preset or "desk")
    defaults.update({"finetune_epochs": 40, "finetune_lr": 5e-4, "subject": None})
    merged = _merge_config(args, defaults)
    if merged["subject"] is None:
        raise CliError("--subject is required")
    ds = _load_dataset(args.data)
    ds, plan = _prepared(ds, merged)
    model, _ = load_checkpoint(args.checkpoint)
    tuned, report = experiments.finetune(
        model, ds, plan, merged["subject"],
        epochs=int(merged["finetune_epochs"]), lr=float(merged["finetune_lr"]),
        seed=merged["seed"],
    )
    out = _outdir(args)
    _write_config(out, "finetune", merged)
    report.save(out / "report.json")
    save_checkpoint(out / "model.ckpt", tuned)
    print(f"finetuned accuracy on {merged['subject']}: "
          f"{report.mean_accuracy:.4f}")
    return 0


def cmd_loso(args) -> int:
    defaults = _train_defaults(args.preset or "desk")
    defaults.update(
        {
            "ratios": "0,0.25,0.5,0.75,1.0",
            "variants": "group_emb,subject_scratch",
            "finetune_epochs": 40,
            "finetune_lr": 5e-4,
        }
    )
    merged = _merge_config(args, defaults)
    ds = _load_dataset(args.data)
    ds, plan = _prepared(ds, merged)
    ratios = [float(r) for r in str(merged["ratios"]).split(",") if r != ""]
    variants = [v.strip() for v in str(merged["variants"]).split(",") if v.strip()]
    for v in variants:
        if v not in experiments.LOSO_VARIANTS:
            raise CliError(f"unknown LOSO variant: {v!r}")
    results = {}
    for variant in variants:
        mode = variant if variant in ("group", "group_emb") else "subject"
        spec = _train_spec(merged, mode if mode != "subject" else "subject")
        config = _model_config(ds, merged, mode)
        per_subject = {}
        for subject in ds.subjects:
            per_subject[str(subject)] = experiments.loso_run(
                ds, plan, subject, ratios, variant,
                pretrain_spec=spec if variant != "subject_scratch" else None,
                scratch_spec=spec if variant == "subject_scratch" else None,
                config=config,
                finetune_epochs=int(merged["finetune_epochs"]),
                finetune_lr=float(merged["finetune_lr"]),
                seed=merged["seed"],
            )
        results[variant] = per_subject
    out = _outdir(args)
    _write_config(out, "loso", merged)
    slim = {
        variant: {
            s: {"ratios": run["ratios"], "accuracy": run["accuracy"]}
            for s, run in per.items()
        }
        for variant, per in results.items()
    }
    (out / "loso.json").write_text(json.dumps(slim, sort_keys=True, indent=1))
    with open(out / "loso.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["variant", "subject", "ratio", "accuracy"])
        for variant, per in results.items():
            for subject, run in per.items():
                for ratio, acc in zip(run["ratios"], run["accuracy"]):
                    writer.writerow([variant, subject, ratio, repr(float(acc))])
    print(f"LOSO sweep over {len(ds.subjects)} subjects, "
          f"{len(ratios)} ratios, variants: {', '.join(variants)}")
    return 0


def cmd_subgroup(args) -> int:
    defaults = _train_defaults(args.preset or "desk")
    defaults["order_seed"] = 0
    merged = _merge_config(args, defaults)
    ds = _load_dataset(args.data)
    ds, plan = _prepared(ds, merged)
    spec = _train_spec(merged, "group_emb")
    config = _model_config(ds, merged, "group_emb")
    order = list(ds.subjects)
    np.random.default_rng(merged["order_seed"]).shuffle(order)
    result = experiments.subgroup_scaling(ds, plan, spec, config=config, order=order)
    out = _outdir(args)
    _write_config(out, "subgroup", merged)
    (out / "subgroup.json").write_text(json.dumps(result, sort_keys=True, indent=1))
    with open(out / "subgroup.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["n_subjects", "mode_a", "mode_b"])
        for n, a, b in zip(result["n"], result["mode_a"], result["mode_b"]):
            writer.writerow([n, repr(float(a)), repr(float(b))])
    print(f"subgroup scaling over n=1..{len(ds.subjects)}")
    return 0


def cmd_kfold(args) -> int:
    defaults = _train_defaults(args.preset or "desk")
    defaults["folds"] = 5
    merged = _merge_config(args, defaults)
    ds = _load_dataset(args.data)
    spec = _train_spec(merged, merged["mode"])
    config = _model_config(ds, merged, merged["mode"])
    result = experiments.kfold_cv(ds, spec, config=config, k=int(merged["folds"]),
                                  seed=merged["seed"])
    out = _outdir(args)
    _write_config(out, "kfold", merged)
    payload = {k: v for k, v in result.items() if k != "reports"}
    (out / "kfold.json").write_text(json.dumps(payload, sort_keys=True, indent=1))
    lo, hi = result["ci95"]
    print(f"{merged['folds']}-fold accuracy {result['mean_accuracy']:.4f} "
          f"(95% CI [{lo:.4f}, {hi:.4f}])")
    return 0


def cmd_pfi(args) -> int:
    defaults = {
        "kind": "temporal",
        "grouping": "single",
        "window_s": 0.1,
        "band_hz": 5.0,
        "repeats": 10,
        "stride": 1,
        "neighbourhood_k": 4,
        "split_seed": 0,
        "preprocess": "standardize",
        "svg": False,
        "layer": None,
        "kernel": None,
    }
    merged = _merge_config(args, defaults)
    ds = _load_dataset(args.data)
    ds, plan = _prepared(ds, merged)
    model, _ = load_checkpoint(args.checkpoint)
    x, y, sidx = experiments.assemble(ds, plan, which="val")
    cfg = interpret.PfiConfig(
        window_s=float(merged["window_s"]),
        band_hz=float(merged["band_hz"]),
        n_repeats=int(merged["repeats"]),
        time_stride=int(merged["stride"]),
        neighbourhood_k=int(merged["neighbourhood_k"]),
        seed=merged["seed"],
    )
    kind = merged["kind"]
    if merged["layer"] is not None or merged["kernel"] is not None:
        if merged["layer"] is None or merged["kernel"] is None:
            raise CliError("kernel PFI needs both --layer and --kernel")
        ref = interpret.KernelRef(int(merged["layer"]), int(merged["kernel"]))
        axis = {"temporal": "time", "spatial": "space", "spectral": "freq"}.get(kind)
        if axis is None:
            raise CliError(f"kernel PFI does not support kind {kind!r}")
        result = interpret.kernel_pfi(model, ref, x, sidx, cfg, axis=axis,
                                      layout=ds.layout, sfreq=ds.sfreq,
                                      times=ds.times)
    elif kind == "temporal":
        result = interpret.temporal_pfi(model, x, y, sidx, ds.sfreq, cfg,
                                        times=ds.times)
    elif kind == "spatial":
        result = interpret.spatial_pfi(model, x, y, sidx, ds.layout, cfg,
                                       grouping=merged["grouping"])
    elif kind == "spectral":
        result = interpret.spectral_pfi(model, x, y, sidx, ds.sfreq, cfg)
    elif kind == "spatiotemporal":
        result = interpret.spatiotemporal_pfi(model, x, y, sidx, ds.layout,
                                              ds.sfreq, cfg, times=ds.times)
    else:
        raise CliError(f"unknown PFI kind: {kind!r}")
    out = _outdir(args)
    _write_config(out, "pfi", merged)
    csv_path = out / f"pfi_{result.kind}.csv"
    result.to_csv(csv_path)
    if merged["svg"]:
        from . import plots

        if result.kind in ("spatial", "kernel_space"):
            plots.plot_sensor_map(result, ds.layout, out / f"pfi_{result.kind}.svg")
        elif result.kind != "spatiotemporal":
            plots.plot_pfi_curve(result, out / f"pfi_{result.kind}.svg")
    print(f"wrote {csv_path} ({len(result.axis)} rows, "
          f"baseline {result.baseline:.4f})")
    return 0


def cmd_fir(args) -> int:
    defaults = {"layer": 0, "kernel": 0, "trials": 50, "svg": False}
    merged = _merge_config(args, defaults)
    model, _ = load_checkpoint(args.checkpoint)
    sfreq = float(args.sfreq) if args.sfreq is not None else 1.0
    ref = interpret.KernelRef(int(merged["layer"]), int(merged["kernel"]))
    freqs, psd = interpret.kernel_fir(model, ref, n_noise_trials=int(merged["trials"]),
                                      seed=merged["seed"], sfreq=sfreq)
    out = _outdir(args)
    _write_config(out, "fir", merged)
    with open(out / "fir.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["freq_hz", "psd"])
        for fr, p in zip(freqs, psd):
            writer.writerow([repr(float(fr)), repr(float(p))])
    if merged["svg"]:
        from . import plots

        plots.plot_fir(freqs, psd, out / "fir.svg")
    print(f"wrote FIR PSD for layer {merged['layer']} kernel {merged['kernel']}")
    return 0


def cmd_embed(args) -> int:
    defaults = {"split_seed": 0, "preprocess": "standardize"}
    merged = _merge_config(args, defaults)
    ds = _load_dataset(args.data)
    ds, plan = _prepared(ds, merged)
    model, _ = load_checkpoint(args.checkpoint)
    per_subject, _, _ = experiments.evaluate_model(model, ds, plan)
    acc = [per_subject[s] for s in ds.subjects]
    diag = interpret.embedding_diagnostics(model, acc)
    diag["per_subject_accuracy"] = {str(s): per_subject[s] for s in ds.subjects}
    out = _outdir(args)
    _write_config(out, "embed", merged)
    (out / "embed.json").write_text(json.dumps(diag, sort_keys=True, indent=1))
    n_sig = sum(1 for c in diag["correlations"]
                if c["p"] is not None and c["p"] < 0.05)
    print(f"embedding PCA: {len(diag['correlations'])} components, "
          f"{n_sig} significant accuracy correlations")
    return 0


def cmd_report(args) -> int:
    from . import plots

    run = Path(args.run)
    if not run.is_dir():
        raise CliError(f"run directory not found: {run}")
    rendered = []
    report_path = run / "report.json"
    if report_path.is_file():
        rep = json.loads(report_path.read_text())
        plots.plot_accuracy_bars(rep["per_subject"], run / "accuracy.svg")
        curves = rep.get("curves", {})
        if "loss" in curves:
            plots.plot_training_curves(curves, run / "training.svg")
        rendered.append("accuracy.svg")
    for csv_path in sorted(run.glob("pfi_*.csv")):
        with open(csv_path) as f:
            rows = list(csv.DictReader(f))
        if not rows:
            continue
        cols = rows[0].keys()
        svg_path = csv_path.with_suffix(".svg")
        if "time_s" in cols:
            xs = [float(r["time_s"]) for r in rows]
            xlabel = "time (s)"
        elif "band_lo_hz" in cols:
            xs = [(float(r["band_lo_hz"]) + float(r["band_hi_hz"])) / 2 for r in rows]
            xlabel = "frequency (Hz)"
        else:
            xs = list(range(len(rows)))
            xlabel = "channel"
        plots.plot_curve(
            xs,
            [float(r["mean_loss"]) for r in rows],
            [float(r["ci_lo"]) for r in rows],
            [float(r["ci_hi"]) for r in rows],
            svg_path,
            xlabel=xlabel,
            ylabel="accuracy loss",
            title=csv_path.stem,
        )
        rendered.append(svg_path.name)
    fir_path = run / "fir.csv"
    if fir_path.is_file():
        with open(fir_path) as f:
            rows = list(csv.DictReader(f))
        plots.plot_fir([float(r["freq_hz"]) for r in rows],
                       [float(r["psd"]) for r in rows], run / "fir.svg")
        rendered.append("fir.svg")
    loso_path = run / "loso.json"
    if loso_path.is_file():
        data = json.loads(loso_path.read_text())
        for variant, per in data.items():
            accs = np.array([per[s]["accuracy"] for s in sorted(per)])
            ratios = per[sorted(per)[0]]["ratios"]
            mean = accs.mean(axis=0)
            if accs.shape[0] >= 2:
                cis = np.array([stats.confidence_interval(accs[:, i])
                                for i in range(accs.shape[1])])
                lo, hi = cis[:, 0], cis[:, 1]
            else:
                lo = hi = None
            plots.plot_curve(ratios, mean, lo, hi, run / f"loso_{variant}.svg",
                             xlabel="training ratio", ylabel="accuracy",
                             title=f"LOSO {variant}")
            rendered.append(f"loso_{variant}.svg")
    if not rendered:
        raise CliError(f"no renderable results found in {run}")
    print(f"rendered: {', '.join(rendered)}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="groupdecode",
        description="Group-level neural decoding experiments on epoched data",
    )
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__import__('groupdecode').__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, data=True, checkpoint=False):
        p.add_argument("--config", help="JSON config file (defaults < file < flags)")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", required=True, help="output directory")
        if data:
            p.add_argument("--data", help="dataset directory")
        if checkpoint:
            p.add_argument("--checkpoint", required=True)

    p = sub.add_parser("gen", help="generate a synthetic dataset")
    common(p, data=False)
    p.add_argument("--preset", choices=["desk"], default=None)
    p.add_argument("--subjects", type=int, default=None)
    p.add_argument("--classes", type=int, default=None)
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--channels", type=int, default=None)
    p.add_argument("--timesteps", type=int, default=None)
    p.add_argument("--sfreq", type=float, default=None)
    p.add_argument("--mixing-angle", dest="mixing_angle", type=float, default=None)
    p.set_defaults(func=cmd_gen)

    def train_flags(p):
        p.add_argument("--preset", choices=["desk", "paper"], default=None)
        p.add_argument("--mode", choices=list(experiments.MODES), default=None)
        p.add_argument("--linear", action=argparse.BooleanOptionalAction, default=None)
        p.add_argument("--epochs", type=int, default=None)
        p.add_argument("--lr", type=float, default=None)
        p.add_argument("--batch-size", dest="batch_size", type=int, default=None)
        p.add_argument("--layers", type=int, default=None)
        p.add_argument("--hidden", type=int, default=None)
        p.add_argument("--fc-hidden", dest="fc_hidden", type=int, default=None)
        p.add_argument("--dropout", type=float, default=None)
        p.add_argument("--embedding-size", dest="embedding_size", type=int, default=None)
        p.add_argument("--preprocess", choices=["standardize", "whiten", "none"],
                       default=None)
        p.add_argument("--split-seed", dest="split_seed", type=int, default=None)

    p = sub.add_parser("train", help="train a decoding model")
    common(p)
    train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("finetune", help="finetune a group checkpoint on one subject")
    common(p, checkpoint=True)
    train_flags(p)
    p.add_argument("--subject", default=None)
    p.add_argument("--finetune-epochs", dest="finetune_epochs", type=int, default=None)
    p.add_argument("--finetune-lr", dest="finetune_lr", type=float, default=None)
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("loso", help="leave-one-subject-out ratio sweep")
    common(p)
    train_flags(p)
    p.add_argument("--ratios", default=None)
    p.add_argument("--variants", default=None)
    p.add_argument("--finetune-epochs", dest="finetune_epochs", type=int, default=None)
    p.add_argument("--finetune-lr", dest="finetune_lr", type=float, default=None)
    p.set_defaults(func=cmd_loso)

    p = sub.add_parser("subgroup", help="accuracy vs number of training subjects")
    common(p)
    train_flags(p)
    p.add_argument("--order-seed", dest="order_seed", type=int, default=None)
    p.set_defaults(func=cmd_subgroup)

    p = sub.add_parser("kfold", help="k-fold cross-validation")
    common(p)
    train_flags(p)
    p.add_argument("--folds", type=int, default=None)
    p.set_defaults(func=cmd_kfold)

    p = sub.add_parser("pfi", help="permutation feature importance")
    common(p, checkpoint=True)
    p.add_argument("--kind", choices=["temporal", "spatial", "spectral",
                                      "spatiotemporal"], default=None)
    p.add_argument("--grouping", choices=list(interpret.GROUPINGS), default=None)
    p.add_argument("--window-s", dest="window_s", type=float, default=None)
    p.add_argument("--band-hz", dest="band_hz", type=float, default=None)
    p.add_argument("--repeats", type=int, default=None)
    p.add_argument("--stride", type=int, default=None)
    p.add_argument("--neighbourhood-k", dest="neighbourhood_k", type=int, default=None)
    p.add_argument("--layer", type=int, default=None, help="kernel PFI: conv layer")
    p.add_argument("--kernel", type=int, default=None, help="kernel PFI: filter index")
    p.add_argument("--split-seed", dest="split_seed", type=int, default=None)
    p.add_argument("--preprocess", choices=["standardize", "whiten", "none"],
                   default=None)
    p.add_argument("--svg", action=argparse.BooleanOptionalAction, default=None)
    p.set_defaults(func=cmd_pfi)

    p = sub.add_parser("fir", help="kernel FIR analysis via white noise")
    common(p, data=False, checkpoint=True)
    p.add_argument("--layer", type=int, default=None)
    p.add_argument("--kernel", type=int, default=None)
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--sfreq", type=float, default=None)
    p.add_argument("--svg", action=argparse.BooleanOptionalAction, default=None)
    p.set_defaults(func=cmd_fir)

    p = sub.add_parser("embed", help="embedding PCA diagnostics")
    common(p, checkpoint=True)
    p.add_argument("--split-seed", dest="split_seed", type=int, default=None)
    p.add_argument("--preprocess", choices=["standardize", "whiten", "none"],
                   default=None)
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("report", help="re-render figures from stored results")
    p.add_argument("--run", required=True, help="run directory to render")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CliError, dataio.DatasetFormatError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (ValueError, KeyError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
