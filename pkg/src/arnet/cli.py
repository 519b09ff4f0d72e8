"""Operator-facing command line: dataset generation, training, benchmarking,
and embedding export, all driven by `key = value` config files.

Subcommands: gen, train, bench, export-embeddings. The top-level `--verify`
flag runs the gradient-check and transport-solver suites and exits nonzero on
any failure. Every run echoes its fully resolved config into the output
directory, so results can be reproduced from the echo alone.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace

import numpy as np

from . import verify
from .checkpoint import load_checkpoint, save_checkpoint
from .configfile import RunConfig, build_dataset, parse_config, to_train_config, write_config
from .datagen import load_csv, save_csv
from .errors import ArnetError, NumericError, ShapeError
from .evaluation import evaluate, metrics_report_text, slot_sweep
from .memory import write_snapshot_csv
from .model import forward
from .numkernel import derive_seed
from .trainer import initial_state, train


def _prepare_out_dir(cfg: RunConfig) -> str:
    os.makedirs(cfg.out_dir, exist_ok=True)
    write_config(cfg, os.path.join(cfg.out_dir, "config.txt"))
    return cfg.out_dir


def cmd_gen(cfg: RunConfig) -> str:
    """Write dataset.csv plus its .meta sidecar into the output directory."""
    out_dir = _prepare_out_dir(cfg)
    ds = build_dataset(cfg)
    path = os.path.join(out_dir, "dataset.csv")
    save_csv(ds, path)
    return path


def cmd_train(cfg: RunConfig) -> dict:
    """Train per config; writes checkpoint.bin, trainlog.csv, metrics.txt."""
    out_dir = _prepare_out_dir(cfg)
    ds = build_dataset(cfg)
    train_cfg = to_train_config(cfg)
    state = initial_state(train_cfg, ds)
    try:
        train(train_cfg, ds, start=state)
    except NumericError as exc:
        dump = os.path.join(out_dir, "abort.txt")
        with open(dump, "w", encoding="utf-8") as fh:
            fh.write(f"training aborted: {exc}\n")
        raise
    ckpt_path = os.path.join(out_dir, "checkpoint.bin")
    save_checkpoint(ckpt_path, state)
    log_path = os.path.join(out_dir, "trainlog.csv")
    state.log.to_csv(log_path)
    metrics_path = os.path.join(out_dir, "metrics.txt")
    if ds.indices_for("test").size > 0:
        metrics = evaluate(state.params, ds, "test")
        with open(metrics_path, "w", encoding="utf-8") as fh:
            fh.write(metrics_report_text(metrics))
    return {"checkpoint": ckpt_path, "log": log_path, "metrics": metrics_path}


def _bench_cell_seed(seed: int, eps: float, run: int) -> int:
    return derive_seed(seed, "bench-cell", f"{eps:.6f}", run)


def cmd_bench(cfg: RunConfig) -> dict:
    """Run the (method, epsilon) grid over n_seeds and write bench.csv.

    Within one (epsilon, run) cell every method sees the same dataset, so the
    comparison is paired. When `slot_list` is set, a slot-count sweep on the
    config's own noise settings is written to slots.csv as well. Failed cells
    are recorded with nan metrics and the run continues.
    """
    out_dir = _prepare_out_dir(cfg)
    train_base = to_train_config(cfg)
    rows = []
    cells_dir = os.path.join(out_dir, "cells")
    os.makedirs(cells_dir, exist_ok=True)
    for method in cfg.methods:
        for eps in cfg.epsilons:
            accs, f1s = [], []
            failed = False
            for run in range(cfg.n_seeds):
                cell_seed = _bench_cell_seed(cfg.seed, eps, run)
                try:
                    ds = build_dataset(cfg, epsilon=eps, seed=cell_seed)
                    run_cfg = replace(
                        train_base, method=method, seed=derive_seed(cell_seed, method)
                    )
                    params, _, log = train(run_cfg, ds)
                    metrics = evaluate(params, ds, "test")
                except ArnetError as exc:
                    print(f"bench cell ({method}, {eps:.2f}, run {run}) failed: {exc}", file=sys.stderr)
                    failed = True
                    break
                accs.append(metrics.accuracy)
                f1s.append(metrics.macro_f1)
                log.to_csv(os.path.join(cells_dir, f"{method}_eps{eps:.2f}_run{run}.csv"))
            if failed or not accs:
                rows.append((method, eps, float("nan"), float("nan"), float("nan"), float("nan")))
            else:
                acc = np.array(accs)
                f1 = np.array(f1s)
                rows.append((method, eps, acc.mean(), acc.std(), f1.mean(), f1.std()))
    bench_path = os.path.join(out_dir, "bench.csv")
    with open(bench_path, "w", encoding="utf-8") as fh:
        fh.write("method,epsilon,acc_mean,acc_sd,f1_mean,f1_sd\n")
        for method, eps, am, asd, fm, fsd in rows:
            fh.write(f"{method},{eps:.6f},{am:.6f},{asd:.6f},{fm:.6f},{fsd:.6f}\n")
    outputs = {"bench": bench_path}
    if cfg.slot_list:
        ds = build_dataset(cfg)
        sweep_rows = slot_sweep(train_base, ds, cfg.slot_list, cfg.n_seeds)
        slots_path = os.path.join(out_dir, "slots.csv")
        with open(slots_path, "w", encoding="utf-8") as fh:
            fh.write("slots,acc_mean,acc_sd,f1_mean,f1_sd\n")
            for row in sweep_rows:
                fh.write(
                    f"{row['slots']},{row['accuracy_mean']:.6f},{row['accuracy_sd']:.6f},"
                    f"{row['macro_f1_mean']:.6f},{row['macro_f1_sd']:.6f}\n"
                )
        outputs["slots"] = slots_path
    return outputs


def cmd_export_embeddings(checkpoint_path: str, data_path: str, out_dir: str) -> dict:
    """Write embeddings.csv for every dataset row plus memory.csv snapshot."""
    os.makedirs(out_dir, exist_ok=True)
    state = load_checkpoint(checkpoint_path)
    ds = load_csv(data_path)
    if ds.n_features != state.params.dims.n_features:
        raise ShapeError(
            f"dataset has {ds.n_features} features but checkpoint expects "
            f"{state.params.dims.n_features}"
        )
    trace = forward(state.params, ds.features)
    preds = np.argmax(trace.probs, axis=1)
    emb_path = os.path.join(out_dir, "embeddings.csv")
    latent_dim = trace.latents.shape[1]
    with open(emb_path, "w", encoding="utf-8") as fh:
        header = ["idx"] + [f"dim_{i}" for i in range(latent_dim)] + ["y_clean", "y_noisy", "pred"]
        fh.write(",".join(header) + "\n")
        for i in range(ds.n_rows):
            cells = [str(i)]
            cells += [f"{x:.6f}" for x in trace.latents[i]]
            cells += [str(int(ds.y_clean[i])), str(int(ds.y_noisy[i])), str(int(preds[i]))]
            fh.write(",".join(cells) + "\n")
    outputs = {"embeddings": emb_path}
    if state.memory is not None:
        mem_path = os.path.join(out_dir, "memory.csv")
        write_snapshot_csv(state.memory, mem_path)
        outputs["memory"] = mem_path
    return outputs


def _load_config(args) -> RunConfig:
    cfg = parse_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "out", None):
        cfg.out_dir = args.out
    return cfg


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="arnet",
        description="Prototype-memory robust training: experiments and exports.",
    )
    parser.add_argument(
        "--verify",
        action="store_true",
        help="run the gradient-check and transport-solver suites and exit",
    )
    sub = parser.add_subparsers(dest="command")
    for name, help_text in (
        ("gen", "generate a dataset CSV with its metadata sidecar"),
        ("train", "train one model and write checkpoint, log, and metrics"),
        ("bench", "run the (method, epsilon) comparison grid"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="path to a key = value config file")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", default=None, help="override the config output directory")
    exp = sub.add_parser("export-embeddings", help="export latent embeddings and memory snapshot")
    exp.add_argument("--checkpoint", required=True)
    exp.add_argument("--data", required=True, help="dataset CSV to embed")
    exp.add_argument("--out", required=True, help="output directory")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.verify:
            ok, lines = verify.run_all()
            for line in lines:
                print(line)
            return 0 if ok else 1
        if args.command == "gen":
            path = cmd_gen(_load_config(args))
            print(f"wrote {path}")
        elif args.command == "train":
            outputs = cmd_train(_load_config(args))
            print(" ".join(f"{k}={v}" for k, v in outputs.items()))
        elif args.command == "bench":
            outputs = cmd_bench(_load_config(args))
            print(" ".join(f"{k}={v}" for k, v in outputs.items()))
        elif args.command == "export-embeddings":
            outputs = cmd_export_embeddings(args.checkpoint, args.data, args.out)
            print(" ".join(f"{k}={v}" for k, v in outputs.items()))
        else:
            parser.print_help()
            return 2
    except ArnetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
