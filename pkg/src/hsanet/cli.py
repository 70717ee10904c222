"""Command-line entry points: train, eval, denoise, ablate, params.

Every run writes a JSON manifest (command, resolved config, seed, artifact
hashes) into its output directory; manifests are written once and never
mutated. Exit codes: 0 success, 2 configuration or input error, 3
numerical failure during training.
"""

import argparse
import csv
import hashlib
import json
import os
import sys
import time
from dataclasses import asdict, replace

import numpy as np
import torch

from . import data as data_mod
from . import metrics as metrics_mod
from .config import (SYNTHETIC_DEFAULTS, build_configs, dump_resolved, load_config,
                     parse_param_budget, resolved_dict)
from .errors import ConfigError, DataError, NumericsError
from .model import build, format_param_table, load_checkpoint, param_count, param_table
from .training import train

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICS = 3

LAMBDA_GRID = (0.0, 0.1, 0.5, 1.0)
TOGGLE_GRID = (
    (False, False, False),
    (True, True, False),
    (True, False, True),
    (False, True, True),
    (True, True, True),
)


def _out_dir(args, command):
    if args.out:
        path = args.out
    else:
        root = os.environ.get("HSANET_OUT_ROOT", "runs")
        path = os.path.join(root, f"{command}_{time.strftime('%Y%m%d-%H%M%S')}_{os.getpid()}")
    os.makedirs(path, exist_ok=True)
    return path


def _sha256(path):
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_manifest(out_dir, command, args, resolved, seed, artifacts):
    manifest = {
        "command": command,
        "config_path": getattr(args, "config", None),
        "resolved_config": resolved,
        "seed": seed,
        "out_dir": os.path.abspath(out_dir),
        "argv": sys.argv[1:],
        "artifacts": {os.path.basename(p): _sha256(p) for p in artifacts},
        "created": time.strftime("%Y-%m-%dT%H:%M:%S"),
    }
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return path


def _parse_toggles(items):
    mapping = {"esga": "use_esga", "epga": "use_epga", "hic": "use_hic"}
    overrides = {}
    for item in items or []:
        name, _, state = item.partition("=")
        name = name.strip().lower()
        state = state.strip().lower()
        if name not in mapping or state not in ("on", "off"):
            raise ConfigError(
                f"--toggle expects esga|epga|hic=on|off, got {item!r}"
            )
        overrides[mapping[name]] = state == "on"
    return overrides


def _load_raw_config(args):
    if getattr(args, "config", None):
        return load_config(args.config)
    return {"model": {}, "train": {}, "data": {}}


def _configs_from_args(args):
    raw = _load_raw_config(args)
    model_overrides = _parse_toggles(getattr(args, "toggle", None))
    train_overrides = {}
    if getattr(args, "seed", None) is not None:
        model_overrides["seed"] = args.seed
        train_overrides["seed"] = args.seed
    if getattr(args, "epochs", None) is not None:
        train_overrides["epochs"] = args.epochs
    if getattr(args, "lambda_sobel", None) is not None:
        train_overrides["lambda_sobel"] = args.lambda_sobel
    if getattr(args, "modality", None) == "pet" and "lambda_sobel" not in train_overrides:
        train_overrides["lambda_sobel"] = 0.0  # the PET recipe drops the edge term
    return build_configs(raw, model_overrides, train_overrides)


def _synthetic_pairs(options, offset=0):
    pairs = []
    for v in range(int(options["volumes"])):
        pairs.append(data_mod.synthetic_phantom_volume(
            slices=int(options["slices"]),
            height=int(options["height"]),
            width=int(options["width"]),
            noise_sigma=float(options["noise_sigma"]),
            noise=options["noise"],
            seed=int(options["seed"]) + offset + v,
        ))
    return pairs


def _training_dataset(args, data_section):
    if getattr(args, "synthetic", False):
        return _synthetic_pairs(data_section["synthetic"])
    manifest = data_section.get("manifest")
    if not manifest:
        raise ConfigError(
            "data.manifest is required unless --synthetic is given "
            "(set data.manifest in the config file)"
        )
    return data_mod.load_pairs_from_manifest(manifest)


def cmd_train(args):
    model_config, train_config, data_section = _configs_from_args(args)
    dataset = _training_dataset(args, data_section)
    out_dir = _out_dir(args, "train")
    result = train(model_config, train_config, dataset, out_dir,
                   total_steps=args.steps)
    resolved = resolved_dict(model_config, train_config, data_section)
    dump_resolved(os.path.join(out_dir, "resolved_config.yaml"), resolved)
    artifacts = [result.checkpoint_path, result.log_path,
                 os.path.join(out_dir, "resolved_config.yaml")]
    _write_manifest(out_dir, "train", args, resolved, train_config.seed, artifacts)
    print(f"trained {result.steps} steps; checkpoint at {result.checkpoint_path}")
    if result.steps:
        print(f"loss {result.initial_loss:.6f} -> {result.final_loss:.6f}")
    return EXIT_OK


def _eval_pairs(args):
    if args.synthetic:
        options = dict(SYNTHETIC_DEFAULTS)
        # held-out phantoms: a seed block disjoint from the training default
        options["seed"] = int(options["seed"]) + 1000
        return _synthetic_pairs(options)
    if not args.manifest:
        raise ConfigError("either --manifest or --synthetic is required for eval")
    return data_mod.load_pairs_from_manifest(args.manifest)


def cmd_eval(args):
    model, model_config, step, _ = load_checkpoint(args.checkpoint)
    pairs = _eval_pairs(args)
    out_dir = _out_dir(args, "eval")
    run = args.run_id

    all_rows = []
    baseline_rows = []
    for i, pair in enumerate(pairs):
        patient = f"p{i:03d}"
        all_rows.extend(metrics_mod.evaluate_pair(model, pair, patient=patient))
        baseline_rows.extend(metrics_mod.baseline_pair(pair, patient=patient))

    patient_means = metrics_mod.per_patient_means(all_rows)
    baseline_means = metrics_mod.per_patient_means(baseline_rows)
    stats = metrics_mod.aggregate({
        name: [m[name] for m in patient_means.values()]
        for name in metrics_mod.METRIC_NAMES
    })
    baseline_stats = metrics_mod.aggregate({
        name: [m[name] for m in baseline_means.values()]
        for name in metrics_mod.METRIC_NAMES
    })

    slice_csv = os.path.join(out_dir, "metrics_slices.csv")
    patient_csv = os.path.join(out_dir, "metrics_patients.csv")
    violin_csv = os.path.join(out_dir, "metrics_violin.csv")
    aggregate_csv = os.path.join(out_dir, "metrics_aggregate.csv")
    metrics_mod.write_slice_csv(slice_csv, all_rows, run=run)
    metrics_mod.write_patient_csv(patient_csv, patient_means, run=run)
    metrics_mod.write_violin_csv(violin_csv, patient_means, run=run)
    metrics_mod.write_aggregate_csv(aggregate_csv, stats)

    for name in metrics_mod.METRIC_NAMES:
        print(f"{name}: {stats[name].mean:.4f} +/- {stats[name].std:.4f} "
              f"(input baseline {baseline_stats[name].mean:.4f})")
    print(f"peak memory: {metrics_mod.peak_memory_mb():.0f} MiB")

    resolved = {"model": asdict(model_config),
                "checkpoint": os.path.abspath(args.checkpoint),
                "checkpoint_step": step}
    artifacts = [slice_csv, patient_csv, violin_csv, aggregate_csv]
    _write_manifest(out_dir, "eval", args, resolved, model_config.seed, artifacts)
    return EXIT_OK


def cmd_denoise(args):
    model, model_config, _, _ = load_checkpoint(args.checkpoint)
    values = data_mod.load_volume_values(args.input)
    modality = args.modality
    if modality == "ct":
        pair_norm = data_mod.normalize_ct(values)
    elif modality == "pet":
        pair_norm, bounds = data_mod.normalize_pet(values)
    else:
        pair_norm = np.clip(values, 0.0, 1.0)
    model.eval()
    out = np.empty_like(pair_norm)
    with torch.no_grad():
        for i in range(pair_norm.shape[0]):
            x = torch.from_numpy(np.ascontiguousarray(pair_norm[i], dtype=np.float32))
            out[i] = model(x.unsqueeze(0).unsqueeze(0)).squeeze().numpy()
    if modality == "ct":
        out = data_mod.denormalize_ct(out)
    elif modality == "pet":
        out = data_mod.denormalize_pet(out, bounds)
    out_dir = os.path.dirname(os.path.abspath(args.output))
    os.makedirs(out_dir, exist_ok=True)
    np.save(args.output, out.astype(np.float32))
    print(f"denoised {pair_norm.shape[0]} slices -> {args.output}")
    return EXIT_OK


def cmd_ablate(args):
    model_config, train_config, data_section = _configs_from_args(args)
    dataset = _synthetic_pairs(data_section["synthetic"])
    out_dir = _out_dir(args, "ablate")

    variants = []
    for esga, epga, hic in TOGGLE_GRID:
        variants.append((f"toggles_{'y' if esga else 'n'}{'y' if epga else 'n'}"
                         f"{'y' if hic else 'n'}",
                         replace(model_config, use_esga=esga, use_epga=epga, use_hic=hic),
                         train_config))
    for lam in LAMBDA_GRID:
        variants.append((f"lambda_{lam:g}", model_config,
                         replace(train_config, lambda_sobel=lam)))

    rows = []
    for name, m_cfg, t_cfg in variants:
        model = build(m_cfg)
        count = param_count(model)
        result = train(m_cfg, t_cfg, dataset, os.path.join(out_dir, name),
                       total_steps=args.steps)
        rows.append({
            "variant": name,
            "esga": "✓" if m_cfg.use_esga else "✗",
            "epga": "✓" if m_cfg.use_epga else "✗",
            "hic": "✓" if m_cfg.use_hic else "✗",
            "lambda": t_cfg.lambda_sobel,
            "params": count,
            "steps": result.steps,
            "loss": result.final_loss,
        })
        print(f"{name}: params={count:,} loss={result.final_loss:.6f}")

    table_path = os.path.join(out_dir, "ablation.csv")
    with open(table_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)

    resolved = resolved_dict(model_config, train_config, data_section)
    _write_manifest(out_dir, "ablate", args, resolved, train_config.seed, [table_path])
    print(f"{len(rows)} variants -> {table_path}")
    return EXIT_OK


def cmd_params(args):
    model_config, train_config, data_section = _configs_from_args(args)
    model = build(model_config)
    table = param_table(model)
    print(format_param_table(table))
    total = table["total"]
    if args.max is not None:
        budget = parse_param_budget(args.max)
        if total > budget:
            print(f"total {total:,} exceeds the budget {budget:,}")
            return EXIT_CONFIG
    if args.min is not None:
        floor = parse_param_budget(args.min)
        if total < floor:
            print(f"total {total:,} is below the required minimum {floor:,}")
            return EXIT_CONFIG
    return EXIT_OK


def make_parser():
    parser = argparse.ArgumentParser(
        prog="hsanet",
        description="Hybrid Swin attention denoiser: train, evaluate, denoise, "
                    "ablate, and audit parameter budgets.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="YAML config file (model/train/data sections)")
        p.add_argument("--seed", type=int, help="override model and sampling seeds")
        p.add_argument("--out", help="output directory (default under $HSANET_OUT_ROOT)")

    p_train = sub.add_parser("train", help="train a model and write a checkpoint")
    common(p_train)
    p_train.add_argument("--epochs", type=int, help="override train.epochs")
    p_train.add_argument("--steps", type=int, help="run exactly this many optimizer steps")
    p_train.add_argument("--synthetic", action="store_true",
                         help="train on generated phantom volumes instead of a manifest")
    p_train.add_argument("--modality", choices=("ct", "pet"),
                         help="recipe preset; pet disables the edge loss term")
    p_train.add_argument("--lambda", dest="lambda_sobel", type=float,
                         help="edge loss weight override")
    p_train.add_argument("--toggle", action="append", metavar="MOD=on|off",
                         help="esga|epga|hic=on|off (repeatable)")

    p_eval = sub.add_parser("eval", help="score a checkpoint against paired volumes")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--manifest", help="dataset manifest of low,full,modality lines")
    p_eval.add_argument("--synthetic", action="store_true",
                        help="evaluate on held-out phantom volumes")
    p_eval.add_argument("--run-id", default="run0", help="run tag for CSV exports")
    p_eval.add_argument("--out")

    p_den = sub.add_parser("denoise", help="denoise one volume with a checkpoint")
    p_den.add_argument("--checkpoint", required=True)
    p_den.add_argument("--input", required=True, help="volume: DICOM dir, .npy or .hdr.txt")
    p_den.add_argument("--output", required=True, help="output .npy path")
    p_den.add_argument("--modality", choices=("ct", "pet", "synthetic"), default="ct")

    p_abl = sub.add_parser("ablate", help="build and smoke-run the module/lambda grids")
    common(p_abl)
    p_abl.add_argument("--steps", type=int, default=1,
                       help="training steps per variant (default 1)")

    p_par = sub.add_parser("params", help="print per-module parameter counts")
    common(p_par)
    p_par.add_argument("--max", help="fail (exit 2) if the total exceeds this budget, e.g. 0.7M")
    p_par.add_argument("--min", help="fail (exit 2) if the total is below this count")

    return parser


COMMANDS = {
    "train": cmd_train,
    "eval": cmd_eval,
    "denoise": cmd_denoise,
    "ablate": cmd_ablate,
    "params": cmd_params,
}


def main(argv=None):
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, DataError, FileNotFoundError, NotADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericsError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICS


if __name__ == "__main__":
    sys.exit(main())
