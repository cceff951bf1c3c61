"""``corrnet`` command-line entry point.

Exit codes: 0 success, 1 invalid value or configuration, 2 unreadable,
missing or malformed input (argparse usage errors also exit 2).
"""

import argparse
import csv
import dataclasses
import logging
import sys
from pathlib import Path

import numpy as np

from . import dataio
from .errors import CorrnetError, DataFormatError
from .evaluation import (
    comparison_table,
    entropy_histogram,
    fuse_dataset,
    histogram_csv,
    per_class_csv,
    table_csv,
    table_text,
    topk_listing,
)
from .fusion import STRATEGIES, FusionConfig, search_threshold
from .model import init_params, load_params, save_params, tile_expand_fc1
from .training import LOSS_MODES, SAMPLING_MODES, TrainConfig, train

log = logging.getLogger("corrnet")


def _add_data(p, params=True, params_required=True):
    p.add_argument("--spatial", required=True, help="spatial (RGB) stream score file")
    p.add_argument("--temporal", required=True, help="temporal (flow) stream score file")
    if params:
        p.add_argument("--params", required=params_required, help="correlation head parameter file")


def _add_fusion(p):
    p.add_argument("--config", help="fusion config file (key = value); flags override it")
    p.add_argument("--strategy", help=f"fusion strategy, one of {', '.join(STRATEGIES)} "
                                      "(eval accepts a comma-separated list)")
    p.add_argument("--th", type=float, help="Shannon gate threshold in bits, within [0, log2 B]")
    p.add_argument("--stream-weight", type=float, help="multiplier on u+v (1.0 or 0.5 typical)")
    p.add_argument("--corrnet-weight", type=float, help="multiplier on head logits (e.g. 0.01)")
    p.add_argument("--eps", type=float, help="row normalisation epsilon")


def _add_train(p):
    p.add_argument("--train-config", help="training config file (key = value); flags override it")
    p.add_argument("--hidden", type=int, default=4096, help="head hidden width (default 4096)")
    p.add_argument("--batch", type=int, help="mini-batch size (default 8)")
    p.add_argument("--epochs", type=int, help="training epochs (default 200)")
    p.add_argument("--lr", type=float, help="learning rate (default 0.001)")
    p.add_argument("--momentum", type=float, help="SGD momentum (default 0.9)")
    p.add_argument("--segments", type=int, help="segment count K for --sampling segment (default 3)")
    p.add_argument("--sampling", choices=SAMPLING_MODES, help="training pair sampling (default frame)")
    p.add_argument("--loss", choices=LOSS_MODES, help="loss mode (default softmax_ce)")


def _add_common(p):
    p.add_argument("--seed", type=int, default=0, help="seed for every random draw (default 0)")
    p.add_argument("--threads", type=int, default=1, help="worker threads for per-clip work (default 1)")


def build_parser():
    parser = argparse.ArgumentParser(prog="corrnet", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic pair of stream score files")
    p.add_argument("--classes", type=int, default=10, help="number of classes (default 10)")
    p.add_argument("--mode", default="independent", help="independent, correlated or correlation_only")
    p.add_argument("--clips-per-class", type=int, default=20, help="clips per class (default 20)")
    p.add_argument("--frames", type=int, default=24, help="frames per clip (default 24)")
    p.add_argument("--noise", type=float, default=0.3, help="Gaussian noise scale (default 0.3)")
    p.add_argument("--out-dir", required=True, help="directory for spatial.scores and temporal.scores")
    _add_common(p)

    p = sub.add_parser("train", help="train the correlation head on fixed stream scores")
    _add_data(p, params=False)
    _add_train(p)
    p.add_argument("--eps", type=float, help="row normalisation epsilon")
    p.add_argument("--init", help="start from this parameter file (tiled up if the data has more classes)")
    p.add_argument("--out", required=True, help="output parameter file")
    p.add_argument("--report", help="per-epoch CSV report (default <out>.report.csv)")
    _add_common(p)

    p = sub.add_parser("eval", help="accuracy table for one or more fusion strategies")
    _add_data(p, params_required=False)
    _add_fusion(p)
    p.add_argument("--sampling", choices=("test_all", "train_random"), default="test_all",
                   help="frame sampling at test time (default test_all)")
    p.add_argument("--out", help="write the comparison table as CSV")
    p.add_argument("--per-class", help="write per-class accuracy CSV for the first strategy")
    p.add_argument("--hist", help="write a gate-entropy histogram CSV")
    p.add_argument("--bins", type=int, default=20, help="histogram bins (default 20)")
    p.add_argument("--train-spatial", help="extra spatial file added to the histogram as 'train'")
    p.add_argument("--train-temporal", help="extra temporal file added to the histogram as 'train'")
    _add_common(p)

    p = sub.add_parser("fuse", help="write per-clip fused predictions as CSV")
    _add_data(p, params_required=False)
    _add_fusion(p)
    p.add_argument("--out", required=True, help="output CSV path")
    _add_common(p)

    p = sub.add_parser("search-th", help="pick the Shannon threshold on a held-out split")
    _add_data(p, params_required=False)
    _add_fusion(p)
    _add_train(p)
    p.add_argument("--val-fraction", type=float, default=0.2, help="held-out fraction (default 0.2)")
    p.add_argument("--grid-steps", type=int, default=21, help="threshold grid points (default 21)")
    p.add_argument("--out", help="write a fusion config with the chosen threshold")
    _add_common(p)

    p = sub.add_parser("inspect", help="top-k classes of each source for one clip")
    _add_data(p)
    p.add_argument("--clip", required=True, help="clip id")
    p.add_argument("--topk", type=int, default=5, help="list length (default 5)")
    p.add_argument("--eps", type=float, help="row normalisation epsilon")
    _add_common(p)
    return parser


def _fusion_config(args, strategy=None):
    base = FusionConfig.load(args.config) if getattr(args, "config", None) else FusionConfig()
    overrides = {
        "strategy": strategy or args.strategy,
        "th": args.th,
        "stream_weight": args.stream_weight,
        "corrnet_weight": args.corrnet_weight,
        "eps": args.eps,
    }
    return dataclasses.replace(base, **{k: v for k, v in overrides.items() if v is not None})


def _train_config(args):
    base = TrainConfig.load(args.train_config) if getattr(args, "train_config", None) else TrainConfig()
    overrides = {
        "batch_size": args.batch,
        "epochs": args.epochs,
        "learning_rate": args.lr,
        "momentum": args.momentum,
        "K": args.segments,
        "sampling": args.sampling,
        "loss_mode": args.loss,
        "eps": getattr(args, "eps", None),
        "seed": args.seed,
    }
    return dataclasses.replace(base, **{k: v for k, v in overrides.items() if v is not None})


def _load(args):
    return dataio.load_dataset(args.spatial, args.temporal)


def _params(args):
    return load_params(args.params) if args.params else None


def cmd_generate(args):
    spec = dataio.SyntheticSpec(
        class_count=args.classes, clips_per_class=args.clips_per_class,
        frames_per_clip=args.frames, noise_scale=args.noise,
        correlation_mode=args.mode, seed=args.seed,
    )
    ds = dataio.generate_synthetic(spec)
    sp, tp = dataio.write_paired(ds, args.out_dir)
    print(f"wrote {sp} and {tp}: {len(ds)} clips, {spec.class_count} classes, "
          f"mode {spec.correlation_mode}, seed {spec.seed}")


def cmd_train(args):
    ds = _load(args)
    config = _train_config(args)
    B = ds.class_count
    if args.init:
        params = load_params(args.init)
        if (params.n, params.m) != (ds.spatial.class_count, ds.temporal.class_count):
            params = tile_expand_fc1(params, ds.spatial.class_count, ds.temporal.class_count)
    else:
        params = init_params(ds.spatial.class_count, ds.temporal.class_count, args.hidden, B, args.seed)

    def progress(epoch, loss, acc):
        log.info("epoch %d loss %.6f acc %.4f", epoch, loss, acc)

    params, report = train(ds, params, config, log=progress)
    save_params(params, args.out)
    report.params_path = str(args.out)
    report_path = args.report or f"{args.out}.report.csv"
    report.write_csv(report_path)
    final = f"loss {report.losses[-1]:.6f}, train acc {report.accuracies[-1]:.4f}" if report.losses else "no epochs run"
    print(f"trained {config.epochs} epochs on {len(ds)} clips: {final}; params -> {args.out}, report -> {report_path}")


def cmd_eval(args):
    ds = _load(args)
    params = _params(args)
    base = _fusion_config(args, args.strategy.split(",")[0] if args.strategy else None)
    strategies = args.strategy.split(",") if args.strategy else [base.strategy]
    rows = comparison_table(ds, params, strategies, base, args.sampling, args.seed, args.threads)
    sys.stdout.write(table_text(rows))
    if args.out:
        Path(args.out).write_text(table_csv(rows), encoding="utf-8")
    if args.per_class:
        Path(args.per_class).write_text(per_class_csv(rows[0], ds.class_names), encoding="utf-8")
    if args.hist:
        if params is None:
            raise CorrnetError("--hist needs --params")
        subsets = {}
        if args.train_spatial and args.train_temporal:
            subsets["train"] = dataio.load_dataset(args.train_spatial, args.train_temporal)
        subsets["eval"] = ds
        edges, counts = entropy_histogram(subsets, params, base, args.bins)
        Path(args.hist).write_text(histogram_csv(edges, counts), encoding="utf-8")


def cmd_fuse(args):
    ds = _load(args)
    config = _fusion_config(args)
    decisions, _ = fuse_dataset(ds, _params(args), config, threads=args.threads)
    B = ds.class_count
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["clip_id", "label", "pred", "corrnet_included", "gate_entropy"]
                        + [f"p_{c}" for c in range(B)])
        for clip_id, label, d in zip(ds.clip_ids, ds.labels, decisions):
            label_text = label if isinstance(label, int) else "|".join(map(str, np.flatnonzero(label)))
            writer.writerow([clip_id, label_text, int(np.argmax(d.scores)), int(d.corrnet_included),
                             repr(float(d.gate_entropy))] + [repr(float(p)) for p in d.fused_probs])
    print(f"fused {len(ds)} clips with {config.strategy} -> {args.out}")


def cmd_search_th(args):
    ds = _load(args)
    sub_train, sub_val = dataio.holdout_split(ds, args.val_fraction, args.seed)
    config = _fusion_config(args)
    params = _params(args)
    train_config = None
    if params is None:
        params = init_params(ds.spatial.class_count, ds.temporal.class_count, args.hidden,
                             ds.class_count, args.seed)
        train_config = _train_config(args)
    th = search_threshold(params, sub_train, sub_val, args.grid_steps, config, train_config)
    print(f"th = {th!r} bits (log2 B = {np.log2(ds.class_count):.6f}, "
          f"{len(sub_train)} sub-train / {len(sub_val)} sub-val clips)")
    if args.out:
        dataclasses.replace(config, strategy="corrnet_shannon", th=th).save(args.out)


def cmd_inspect(args):
    ds = _load(args)
    params = load_params(args.params)
    listing = topk_listing(ds, params, args.clip, args.topk, eps=args.eps)
    names = ds.class_names
    print(f"clip {listing.clip_id}")
    for title, items in (("spatial", listing.spatial), ("temporal", listing.temporal),
                         ("sum", listing.sum), ("corrnet", listing.corrnet)):
        print(f"  {title}:")
        for rank, (c, score) in enumerate(items, 1):
            label = str(c) if names[c] == str(c) else f"{names[c]} ({c})"
            print(f"    {rank}. {label}  {score:.4f}")


COMMANDS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "eval": cmd_eval,
    "fuse": cmd_fuse,
    "search-th": cmd_search_th,
    "inspect": cmd_inspect,
}


def main(argv=None):
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return 1
    try:
        COMMANDS[args.command](args)
    except (DataFormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (CorrnetError, IndexError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
