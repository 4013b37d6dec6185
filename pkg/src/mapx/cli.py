"""Command-line interface.

Subcommands: gen-field, simulate, reconstruct, train-dnn, eval-dnn,
export-dataset, score, sweep. Every command is deterministic for a fixed
config and seed. Exit codes: 0 success, 2 config error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import harness, interchange, phy
from .recon_dnn import (
    TrainingConfig,
    dnn_map,
    load_model,
    reference_model,
    save_model,
    train_online,
)
from .scenario import ConfigError, ScenarioConfig, load_config, scenario_hash, substream


def _load(args: argparse.Namespace) -> ScenarioConfig:
    if args.config:
        return load_config(args.config, seed=args.seed)
    config = ScenarioConfig()
    if args.seed is not None:
        config = config.with_seed(args.seed)
    return config


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="scenario config file (key = value lines)")
    parser.add_argument("--seed", type=int, help="override the config seed")
    parser.add_argument("--out-dir", default=".", help="output directory")


def _outdir(args: argparse.Namespace) -> str:
    os.makedirs(args.out_dir, exist_ok=True)
    return args.out_dir


def cmd_gen_field(args: argparse.Namespace) -> int:
    config = _load(args)
    out = _outdir(args)
    scene = harness.make_scene(config)
    tensors = [interchange.write_tensor(out, "truth", scene.truth)]
    interchange.write_manifest(out, tensors, scenario_hash(config))
    harness.export_heatmap(
        scene.truth, os.path.join(out, "truth.png"), scale=args.scale
    )
    print(f"wrote truth tensor and heatmap to {out}")
    return 0


def cmd_simulate(args: argparse.Namespace) -> int:
    config = _load(args)
    out = _outdir(args)
    scene = harness.make_scene(config)
    pairs = phy.simulate_pairs(
        scene.devices, scene.measurements, scene.geom, config, args.pairs
    )
    tensors = [interchange.write_tensor(out, "truth", scene.truth)]
    for i, pair in enumerate(pairs):
        tensors.append(interchange.write_tensor(out, f"pair{i}_ref_re", pair.v_ref.real))
        tensors.append(interchange.write_tensor(out, f"pair{i}_ref_im", pair.v_ref.imag))
        tensors.append(interchange.write_tensor(out, f"pair{i}_info_re", pair.v_info.real))
        tensors.append(interchange.write_tensor(out, f"pair{i}_info_im", pair.v_info.imag))
    interchange.write_manifest(
        out, tensors, scenario_hash(config), extra={"pairs": args.pairs}
    )
    print(f"wrote {args.pairs} received pair(s) to {out}")
    return 0


def cmd_reconstruct(args: argparse.Namespace) -> int:
    config = _load(args)
    out = _outdir(args)
    scene = harness.make_scene(config)
    train_cfg = TrainingConfig(steps=args.train_steps, batch_size=args.train_batch,
                               learning_rate=args.train_lr)
    estimate = harness.run_method(
        scene, args.method, args.budget, train_cfg=train_cfg,
        n_relay=args.train_size,
    )
    snr = harness.recon_snr(estimate, scene.truth)
    err = harness.nmse(estimate, scene.truth)

    tensors = [
        interchange.write_tensor(out, "estimate", estimate.values),
        interchange.write_tensor(out, "mask", estimate.valid.astype(np.float32)),
        interchange.write_tensor(out, "truth", scene.truth),
    ]
    interchange.write_manifest(
        out,
        tensors,
        scenario_hash(config),
        extra={
            "method": args.method,
            "budget": args.budget,
            "snr_db": round(snr, 6),
            "nmse": float(f"{err:.9g}"),
            "valid_frac": round(estimate.valid_fraction, 6),
        },
    )
    harness.export_heatmap(
        estimate.values, os.path.join(out, "estimate.png"),
        valid=estimate.valid, scale=args.scale,
    )
    print(f"method={args.method} budget={args.budget} "
          f"snr_db={snr:.6f} nmse={err:.9g} valid_frac={estimate.valid_fraction:.6f}")
    return 0


def cmd_train_dnn(args: argparse.Namespace) -> int:
    config = _load(args)
    out = _outdir(args)
    scene = harness.make_scene(config)
    pairs = harness.scene_pairs(scene, args.budget)
    model = reference_model(scene.geom, config)
    positions, values = harness.relay_training_set(scene, args.train_size)
    losses = train_online(
        model,
        pairs,
        positions,
        values,
        scene.geom,
        hyper=TrainingConfig(steps=args.train_steps, batch_size=args.train_batch,
                             learning_rate=args.train_lr),
        rng=substream(config.seed, "training"),
    )
    model_path = os.path.join(out, "model.bin")
    save_model(model, model_path)
    with open(os.path.join(out, "loss_trace.csv"), "w", encoding="utf-8") as fh:
        fh.write("step,loss\n")
        for step, loss in enumerate(losses):
            fh.write(f"{step},{loss:.9g}\n")
    print(f"trained {args.train_steps} steps; final loss {losses[-1]:.6g}; "
          f"model at {model_path}")
    return 0


def cmd_eval_dnn(args: argparse.Namespace) -> int:
    config = _load(args)
    out = _outdir(args)
    scene = harness.make_scene(config)
    pairs = harness.scene_pairs(scene, args.budget)
    model = load_model(args.model)
    estimate = dnn_map(model, pairs, scene.geom, config)
    snr = harness.recon_snr(estimate, scene.truth)
    tensors = [
        interchange.write_tensor(out, "estimate", estimate.values),
        interchange.write_tensor(out, "mask", estimate.valid.astype(np.float32)),
        interchange.write_tensor(out, "truth", scene.truth),
    ]
    interchange.write_manifest(
        out, tensors, scenario_hash(config),
        extra={"method": "dnn", "snr_db": round(snr, 6)},
    )
    print(f"snr_db={snr:.6f} valid_frac={estimate.valid_fraction:.6f}")
    return 0


def cmd_export_dataset(args: argparse.Namespace) -> int:
    config = _load(args)
    out = _outdir(args)
    manifest = harness.export_dataset(
        config, args.n_train, args.n_val, out, n_pairs=args.pairs
    )
    print(f"exported {len(manifest['examples'])} examples to {out}")
    return 0


def cmd_score(args: argparse.Namespace) -> int:
    estimate = interchange.read_tensor_file(args.estimate)
    truth = interchange.read_tensor_file(args.truth)
    if estimate.ndim != 2 or estimate.shape != truth.shape:
        raise ValueError(
            f"estimate shape {estimate.shape} does not match truth {truth.shape}"
        )
    if not np.all(np.isfinite(estimate)):
        raise ValueError("estimate contains non-finite values")
    if args.mask:
        mask = interchange.read_tensor_file(args.mask) > 0.5
    else:
        mask = np.ones(estimate.shape, dtype=bool)
    from .recon_linear import GroundEstimate

    wrapped = GroundEstimate(values=estimate.astype(float), valid=mask)
    snr = harness.recon_snr(wrapped, truth)
    err = harness.nmse(wrapped, truth)
    print(f"snr_db={snr:.6f} nmse={err:.9g} valid_frac={wrapped.valid_fraction:.6f}")
    if args.csv:
        with open(args.csv, "w", encoding="utf-8") as fh:
            fh.write("snr_db,nmse,valid_frac\n")
            fh.write(f"{snr:.6f},{err:.9g},{wrapped.valid_fraction:.6f}\n")
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    config = _load(args)
    out = _outdir(args)
    budgets = [int(b) for b in args.budgets.split(",")]
    methods = args.methods.split(",")
    train_cfg = TrainingConfig(steps=args.train_steps, batch_size=args.train_batch,
                               learning_rate=args.train_lr)
    results = harness.run_sweep(
        config, methods, budgets, args.seeds, train_cfg=train_cfg,
        timing=args.timing,
    )
    path = os.path.join(out, "sweep.csv")
    harness.write_results_csv(results, path)
    print(f"wrote {len(results)} rows to {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mapx",
        description="Simulator and reconstruction toolkit for massive "
                    "non-orthogonal direct-to-platform field imaging",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-field", help="generate and export a field realization")
    _add_common(p)
    p.add_argument("--scale", type=int, default=4, help="heatmap pixel scale")
    p.set_defaults(func=cmd_gen_field)

    p = sub.add_parser("simulate", help="simulate received subframe pairs")
    _add_common(p)
    p.add_argument("--pairs", type=int, default=4)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("reconstruct", help="run one reconstruction method")
    _add_common(p)
    p.add_argument("--method", choices=harness.METHODS, required=True)
    p.add_argument("--budget", type=int, default=8, help="subframe budget")
    p.add_argument("--scale", type=int, default=4)
    p.add_argument("--train-steps", type=int, default=2000)
    p.add_argument("--train-size", type=int, default=512)
    p.add_argument("--train-batch", type=int, default=64)
    p.add_argument("--train-lr", type=float, default=1e-3)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("train-dnn", help="train the pointwise model online")
    _add_common(p)
    p.add_argument("--budget", type=int, default=8)
    p.add_argument("--train-steps", type=int, default=2000)
    p.add_argument("--train-size", type=int, default=512)
    p.add_argument("--train-batch", type=int, default=64)
    p.add_argument("--train-lr", type=float, default=1e-3)
    p.set_defaults(func=cmd_train_dnn)

    p = sub.add_parser("eval-dnn", help="evaluate a saved pointwise model")
    _add_common(p)
    p.add_argument("--model", required=True, help="model file from train-dnn")
    p.add_argument("--budget", type=int, default=8)
    p.set_defaults(func=cmd_eval_dnn)

    p = sub.add_parser("export-dataset", help="export offline training examples")
    _add_common(p)
    p.add_argument("--n-train", type=int, default=8)
    p.add_argument("--n-val", type=int, default=2)
    p.add_argument("--pairs", type=int, default=4)
    p.set_defaults(func=cmd_export_dataset)

    p = sub.add_parser("score", help="score an estimate tensor against a truth tensor")
    p.add_argument("--estimate", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--mask", help="optional validity mask tensor (nonzero = valid)")
    p.add_argument("--csv", help="also write the metrics to this CSV file")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("sweep", help="run a methods x budgets x seeds sweep")
    _add_common(p)
    p.add_argument("--budgets", default="2,4,8", help="comma-separated subframe budgets")
    p.add_argument("--seeds", type=int, default=20)
    p.add_argument("--methods", default="linear,sblue")
    p.add_argument("--timing", action="store_true",
                   help="record wall-clock times (breaks byte reproducibility)")
    p.add_argument("--train-steps", type=int, default=2000)
    p.add_argument("--train-batch", type=int, default=64)
    p.add_argument("--train-lr", type=float, default=1e-3)
    p.set_defaults(func=cmd_sweep)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
