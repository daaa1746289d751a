"""Command-line interface.

Subcommands: ``train``, ``eval``, ``extract``, ``svm``, ``gradcheck``,
``info``.  Exit codes: 0 success, 1 runtime failure, 2 usage/config error.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import __version__
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .clips import SamplingPolicy, load_dataset, read_manifest
from .config import ConfigError, load_config
from .fusion import extract_features, read_features, write_features
from .layers import Network
from .oracle import DEFAULT_SEED as GRADCHECK_SEED
from .oracle import format_reports, reports_to_csv, run_suite
from .presets import preset_topology
from .rng import Rng
from .svm import save_svm, svm_predict, svm_train
from .training import TrainingDiverged, train

USAGE_ERROR = 2
RUNTIME_ERROR = 1


def build_parser():
    parser = argparse.ArgumentParser(
        prog="pyranet3d",
        description="Spatio-temporal pyramidal network: train, evaluate, "
                    "extract fused features, fit the SVM stage, and verify "
                    "gradients.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a network from a config file")
    p.add_argument("--config", required=True, help="run configuration file")
    p.add_argument("--preset", choices=("ar", "dsr", "tiny"),
                   help="override the config's model preset")
    p.add_argument("--seed", type=int, help="override the config's seed")
    p.add_argument("--out", help="override the config's output directory")
    p.add_argument("--resume", action="store_true",
                   help="resume from the latest checkpoint in the output dir")
    p.add_argument("--dry-run", action="store_true",
                   help="validate, print the layer table and parameter "
                        "count, then exit")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--deterministic", action="store_true",
                   help="force serial, bit-reproducible execution")
    p.add_argument("--verbose", action="store_true")

    p = sub.add_parser("eval", help="evaluate a checkpoint on a manifest")
    p.add_argument("checkpoint")
    p.add_argument("manifest")
    p.add_argument("--policy", choices=("ar", "dsr"), default="ar")
    p.add_argument("--hop", type=int, default=25)
    p.add_argument("--overlap", type=int, default=7)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--deterministic", action="store_true",
                   help="force serial execution")

    p = sub.add_parser("extract", help="write fused features for a manifest")
    p.add_argument("checkpoint")
    p.add_argument("manifest")
    p.add_argument("--mode", choices=("F", "FM"), default="F",
                   help="F: global fusion, FM: per-set mean fusion")
    p.add_argument("--out", required=True, help="feature file to write")
    p.add_argument("--policy", choices=("ar", "dsr"), default="ar")
    p.add_argument("--hop", type=int, default=25)
    p.add_argument("--overlap", type=int, default=7)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--deterministic", action="store_true",
                   help="force serial execution")

    p = sub.add_parser("svm", help="train/evaluate the one-vs-all SVM stage")
    p.add_argument("train_features", help="3DPNF feature file for training")
    p.add_argument("--test", help="3DPNF feature file for evaluation")
    p.add_argument("--c", type=float, default=1.0, dest="c_reg")
    p.add_argument("--tol", type=float, default=1e-3)
    p.add_argument("--out", help="write the fitted model (npz)")

    p = sub.add_parser("gradcheck", help="finite-difference gradient suite")
    p.add_argument("--preset", default="tiny", choices=("tiny", "ar", "dsr"))
    p.add_argument("--seed", type=int, default=GRADCHECK_SEED)
    p.add_argument("--samples", type=int, default=100,
                   help="parameters sampled per layer")
    p.add_argument("--out", help="also write the report as CSV")

    p = sub.add_parser("info", help="report shapes and parameter counts")
    p.add_argument("checkpoint", nargs="?",
                   help="checkpoint to inspect (omit with --preset)")
    p.add_argument("--preset", choices=("ar", "dsr", "tiny"))
    p.add_argument("--classes", type=int)

    return parser


def _print_network(net: Network):
    inp = net.topology["input"]
    print(f"input      : {inp['width']} x {inp['height']} x {inp['frames']}")
    for name, shape in net.shape_table():
        if len(shape) == 4:
            w, h, m, s = shape
            print(f"{name:<10} : {w} x {h} x {m} x {s}")
        else:
            print(f"{name:<10} : {shape[0]} -> {shape[1]} classes")
    total = net.parameter_count()
    mb = total * 4 / (1024 * 1024)
    print(f"parameters : {total:,} ({total / 1e6:.2f} M)")
    print(f"size       : {mb:.2f} MB at 4 bytes/parameter")
    print("             (quoted ~14.58 MB figures for the dsr topology imply "
          "more than 4 bytes/parameter; see README)")


def _load_clips_for(net, manifest_path, policy, hop, overlap, threads):
    manifest = read_manifest(manifest_path)
    pol = SamplingPolicy(mode=policy, hop=hop, overlap=overlap)
    h, w, t = net.input_shape
    X, y = load_dataset(manifest, pol, target_hw=(h, w), threads=threads)
    if X.shape[1] != t:
        raise ValueError(
            f"sampled clips have {X.shape[1]} frames, model expects {t}"
        )
    return X, y, manifest


def cmd_train(args):
    cfg = load_config(args.config, preset_override=args.preset,
                      seed_override=args.seed, out_override=args.out)
    net = Network(cfg.topology, rng=Rng(cfg.seed))
    _print_network(net)
    if args.dry_run:
        return 0
    if cfg.manifest is None:
        print("error: [data] manifest is required to train", file=sys.stderr)
        return USAGE_ERROR
    if not os.path.exists(cfg.manifest):
        print(f"error: manifest not found: {cfg.manifest}", file=sys.stderr)
        return USAGE_ERROR
    threads = 1 if args.deterministic else max(1, args.threads)
    X, y, _ = _load_clips_for(net, cfg.manifest, cfg.policy, cfg.hop,
                              cfg.overlap, threads)
    X_val = y_val = None
    if cfg.val_fraction > 0:
        order = Rng(cfg.seed).permutation(len(X))
        cut = max(1, int(round(cfg.val_fraction * len(X))))
        X_val, y_val = X[order[:cut]], y[order[:cut]]
        X, y = X[order[cut:]], y[order[cut:]]

    os.makedirs(cfg.out_dir, exist_ok=True)
    metrics_path = os.path.join(cfg.out_dir, "metrics.csv")
    start_epoch = 0
    rng = Rng(cfg.seed)
    if args.resume:
        latest = _latest_checkpoint(cfg.out_dir)
        if latest is not None:
            net, state = load_checkpoint(latest)
            start_epoch = int(state.get("epoch", -1)) + 1
            if "rng" in state:
                rng.set_state(state["rng"])
            print(f"resuming from {latest} at epoch {start_epoch}")

    def on_epoch_end(epoch, network, row, train_rng):
        state = {"epoch": epoch, "lr": row["lr"], "rng": train_rng.state()}
        save_checkpoint(os.path.join(cfg.out_dir, f"epoch_{epoch:04d}.3dpn"),
                        network, state)

    try:
        history = train(net, X, y, cfg.train, X_val=X_val, y_val=y_val,
                        metrics_path=metrics_path,
                        metrics_append=start_epoch > 0,
                        on_epoch_end=on_epoch_end,
                        start_epoch=start_epoch, rng=rng, verbose=args.verbose)
    except TrainingDiverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return RUNTIME_ERROR
    final = os.path.join(cfg.out_dir, "model.3dpn")
    last_epoch = history[-1]["epoch"] if history else start_epoch - 1
    save_checkpoint(final, net, {"epoch": last_epoch,
                                 "lr": history[-1]["lr"] if history else 0.0,
                                 "rng": rng.state()})
    acc = history[-1]["train_acc"] if history else float("nan")
    print(f"trained {len(history)} epochs; final train accuracy {acc:.3f}")
    print(f"checkpoint: {final}")
    print(f"metrics   : {metrics_path}")
    return 0


def _latest_checkpoint(out_dir):
    cands = sorted(
        f for f in os.listdir(out_dir)
        if f.startswith("epoch_") and f.endswith(".3dpn")
    )
    return os.path.join(out_dir, cands[-1]) if cands else None


def cmd_eval(args):
    net, _ = load_checkpoint(args.checkpoint)
    threads = 1 if args.deterministic else max(1, args.threads)
    X, y, manifest = _load_clips_for(net, args.manifest, args.policy,
                                     args.hop, args.overlap, threads)
    preds = np.empty(len(X), dtype=np.int64)
    for k in range(len(X)):
        stack = np.ascontiguousarray(np.transpose(X[k], (1, 2, 0)))
        _, post, _ = net.forward(stack)
        preds[k] = int(np.argmax(post))
    print(f"{'class':<20} {'clips':>6} {'accuracy':>9}")
    for idx, name in enumerate(manifest.class_names):
        mask = y == idx
        if not mask.any():
            continue
        acc = (preds[mask] == idx).mean()
        print(f"{name:<20} {int(mask.sum()):>6} {100 * acc:>8.2f}%")
    overall = (preds == y).mean()
    print(f"{'overall':<20} {len(y):>6} {100 * overall:>8.2f}%")
    return 0


def cmd_extract(args):
    net, _ = load_checkpoint(args.checkpoint)
    threads = 1 if args.deterministic else max(1, args.threads)
    X, y, _ = _load_clips_for(net, args.manifest, args.policy, args.hop,
                              args.overlap, threads)
    mode = "global" if args.mode == "F" else "mean"
    feats = extract_features(net, X, mode=mode)
    write_features(args.out, feats, y, mode)
    print(f"wrote {feats.shape[0]} x {feats.shape[1]} features ({args.mode}) "
          f"to {args.out}")
    return 0


def cmd_svm(args):
    X, y, _ = read_features(args.train_features)
    model = svm_train(X, y, c_reg=args.c_reg, tol=args.tol)
    train_acc = (svm_predict(model, X) == y).mean()
    print(f"svm train accuracy: {100 * train_acc:.2f}% "
          f"({len(y)} clips, C={args.c_reg}, tol={args.tol})")
    if args.test:
        Xt, yt, _ = read_features(args.test)
        test_acc = (svm_predict(model, Xt) == yt).mean()
        print(f"svm test accuracy : {100 * test_acc:.2f}% ({len(yt)} clips)")
    if args.out:
        save_svm(args.out, model)
        print(f"model: {args.out}")
    return 0


def cmd_gradcheck(args):
    if args.preset != "tiny":
        print("warning: full presets are slow to finite-difference; "
              "consider --preset tiny", file=sys.stderr)
    reports = run_suite(preset=args.preset, seed=args.seed,
                        samples_per_layer=args.samples)
    print(format_reports(reports))
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(reports_to_csv(reports))
    return 0 if all(r.passed() for r in reports) else RUNTIME_ERROR


def cmd_info(args):
    if args.checkpoint:
        net, state = load_checkpoint(args.checkpoint)
        if state:
            print(f"training state: epoch={state.get('epoch')} "
                  f"lr={state.get('lr')}")
    elif args.preset:
        topo = preset_topology(args.preset, classes=args.classes)
        net = Network(topo, rng=None)
    else:
        print("error: give a checkpoint path or --preset", file=sys.stderr)
        return USAGE_ERROR
    _print_network(net)
    return 0


COMMANDS = {
    "train": cmd_train,
    "eval": cmd_eval,
    "extract": cmd_extract,
    "svm": cmd_svm,
    "gradcheck": cmd_gradcheck,
    "info": cmd_info,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except (CheckpointError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return RUNTIME_ERROR


def entry():  # console-script shim
    sys.exit(main())


if __name__ == "__main__":
    entry()
