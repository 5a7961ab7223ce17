"""Command line interface: fsdd <subcommand>."""
from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from . import __version__
from .fewshot import evaluate, write_report
from .learner import TrainConfig, embed, load_model, save_model, train_embedder
from .relabel import bisection_split, greedy_group, kmeans_relabel
from .runner import run_experiment
from .selection import bin_by_metric, budget_sample, distance_filtered_sample, select_by_similarity
from .stats import compute_class_stats, dataset_prototypes
from .store import load_dataset, save_dataset, save_relabel, subset
from .synth import SynthSpec, gen_hierarchical


def _parse_band(text: str) -> tuple[float, float]:
    try:
        lo, hi = (float(part) for part in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"band must be 'lo,hi', got {text!r}") from None
    return lo, hi


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fsdd", description="Few-shot dataset design toolkit")
    parser.add_argument("--version", action="version", version=f"fsdd {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a hierarchical synthetic dataset")
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--supers", type=int, required=True)
    p.add_argument("--classes-per-super", type=int, required=True)
    p.add_argument("--images", type=int, required=True)
    p.add_argument("--separation", type=float, default=1.0)
    p.add_argument("--spread", type=float, default=0.1)
    p.add_argument("--noise", type=float, default=0.05)
    p.add_argument("--subspace", type=int, default=None,
                   help="rank of the per-super-cluster class-offset subspace")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("stats", help="per-class diversity/difficulty/distance table")
    p.add_argument("--dataset", required=True)
    p.add_argument("--test-dataset", required=True)
    p.add_argument("--holdout", type=float, default=0.2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("split", help="balanced principal-component class splitting")
    p.add_argument("--dataset", required=True)
    p.add_argument("--ratio", type=int, required=True, choices=(2, 4, 8))
    p.add_argument("--out", required=True)

    p = sub.add_parser("group", help="balanced greedy class grouping")
    p.add_argument("--dataset", required=True)
    p.add_argument("--ratio", type=float, required=True, choices=(0.5, 0.25, 0.125))
    p.add_argument("--out", required=True)

    p = sub.add_parser("kmeans", help="k-means relabeling baseline")
    p.add_argument("--dataset", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-iters", type=int, default=100)
    p.add_argument("--out", required=True)

    p = sub.add_parser("select", help="select classes and sample an image budget")
    p.add_argument("--dataset", required=True)
    p.add_argument("--test-dataset", required=True)
    p.add_argument("--mode", required=True, choices=("random", "closest", "farthest"))
    p.add_argument("--classes", type=int, required=True)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--budget", type=int)
    group.add_argument("--images-per-class", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("select-bin", help="sample classes from a metric decile bin")
    p.add_argument("--dataset", required=True)
    p.add_argument("--test-dataset", required=True)
    p.add_argument("--metric", required=True, choices=("diversity", "difficulty"))
    p.add_argument("--bin", type=int, required=True, choices=range(10))
    p.add_argument("--band", type=_parse_band, default=(0.4, 0.6))
    p.add_argument("--classes", type=int, required=True)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--budget", type=int)
    group.add_argument("--images-per-class", type=int)
    p.add_argument("--holdout", type=float, default=0.2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="train an embedder with a cosine head")
    p.add_argument("--dataset", required=True)
    p.add_argument("--kind", default="linear", choices=("identity", "linear", "mlp1"))
    p.add_argument("--out-dim", type=int, default=None)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--weight-decay", type=float, default=5e-4)
    p.add_argument("--scale", type=float, default=10.0)
    p.add_argument("--decay-epochs", type=int, nargs="*", default=[])
    p.add_argument("--decay-factor", type=float, default=10.0)
    p.add_argument("--warmup", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("eval", help="episodic N-way K-shot evaluation")
    p.add_argument("--dataset", required=True)
    p.add_argument("--model", default=None)
    p.add_argument("--classifier", default="cc", choices=("cc", "proto", "matching"))
    p.add_argument("--nway", type=int, default=5)
    p.add_argument("--kshot", type=int, default=5)
    p.add_argument("--query", type=int, default=15)
    p.add_argument("--episodes", type=int, default=10000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--topk", type=int, default=1)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", default=None, help="report JSON path")
    p.add_argument("--csv", default=None, help="report CSV path")

    p = sub.add_parser("run", help="run a config-driven experiment sweep")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)

    return parser


def _cmd_synth(args) -> int:
    spec = SynthSpec(
        dim=args.dim,
        n_super=args.supers,
        classes_per_super=args.classes_per_super,
        images_per_class=args.images,
        super_separation=args.separation,
        intra_super_spread=args.spread,
        within_class_noise=args.noise,
        class_subspace_dim=args.subspace,
        seed=args.seed,
    )
    ds, _ = gen_hierarchical(spec)
    save_dataset(ds, args.out)
    print(f"wrote {ds.n} records, {len(ds.classes)} classes to {args.out}")
    return 0


def _cmd_stats(args) -> int:
    ds = load_dataset(args.dataset)
    test = load_dataset(args.test_dataset)
    stats = compute_class_stats(
        ds,
        test_prototypes=dataset_prototypes(test),
        with_difficulty=True,
        holdout_fraction=args.holdout,
        seed=args.seed,
    )
    with open(args.out, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["class_id", "n_members", "diversity", "difficulty", "dist_to_test"])
        for s in stats:
            writer.writerow(
                [
                    s.class_id,
                    s.n_members,
                    repr(s.diversity),
                    "" if s.difficulty is None else repr(s.difficulty),
                    repr(s.dist_to_test),
                ]
            )
    print(f"wrote stats for {len(stats)} classes to {args.out}")
    return 0


def _cmd_split(args) -> int:
    rmap = bisection_split(load_dataset(args.dataset), args.ratio)
    save_relabel(rmap, args.out)
    print(f"wrote relabel map with {len(rmap.new_classes)} classes to {args.out}")
    return 0


def _cmd_group(args) -> int:
    rmap = greedy_group(load_dataset(args.dataset), args.ratio)
    save_relabel(rmap, args.out)
    print(f"wrote relabel map with {len(rmap.new_classes)} classes to {args.out}")
    return 0


def _cmd_kmeans(args) -> int:
    rmap = kmeans_relabel(load_dataset(args.dataset), args.k, seed=args.seed, max_iters=args.max_iters)
    save_relabel(rmap, args.out)
    print(f"wrote relabel map with {len(rmap.new_classes)} classes to {args.out}")
    return 0


def _write_selection(ds, chosen, args) -> int:
    budget = args.budget if args.budget is not None else args.images_per_class * args.classes
    keep = budget_sample(ds, chosen, budget, seed=args.seed)
    out = subset(ds, keep)
    save_dataset(out, args.out)
    meta = {
        "classes": sorted(int(c) for c in chosen),
        "images_per_class": budget // len(chosen),
        "remainder": budget - (budget // len(chosen)) * len(chosen),
        "seed": args.seed,
    }
    (Path(args.out) / "selection.json").write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n")
    print(f"wrote {out.n} records, {len(out.classes)} classes to {args.out}")
    return 0


def _cmd_select(args) -> int:
    ds = load_dataset(args.dataset)
    test = load_dataset(args.test_dataset)
    stats = compute_class_stats(ds, test_prototypes=dataset_prototypes(test))
    chosen = select_by_similarity(stats, None, args.mode, args.classes, seed=args.seed)
    return _write_selection(ds, chosen, args)


def _cmd_select_bin(args) -> int:
    ds = load_dataset(args.dataset)
    test = load_dataset(args.test_dataset)
    test_protos = dataset_prototypes(test)
    stats = compute_class_stats(
        ds,
        test_prototypes=test_protos,
        with_difficulty=args.metric == "difficulty",
        holdout_fraction=args.holdout,
        seed=args.seed,
    )
    bins = bin_by_metric(stats, args.metric)
    chosen = distance_filtered_sample(
        bins[args.bin], stats, test_protos, args.classes, band=args.band, seed=args.seed
    )
    return _write_selection(ds, chosen, args)


def _cmd_train(args) -> int:
    ds = load_dataset(args.dataset)
    cfg = TrainConfig(
        epochs=args.epochs,
        batch_size=min(args.batch_size, ds.n),
        learning_rate=args.lr,
        momentum=args.momentum,
        weight_decay=args.weight_decay,
        cosine_scale=args.scale,
        seed=args.seed,
        lr_decay_epochs=tuple(args.decay_epochs),
        lr_decay_factor=args.decay_factor,
        warmup_steps=args.warmup,
    )
    embedder = train_embedder(ds, cfg, kind=args.kind, out_dim=args.out_dim)
    save_model(embedder, args.out)
    print(f"wrote {embedder.kind} model ({embedder.in_dim} -> {embedder.out_dim}) to {args.out}")
    return 0


def _cmd_eval(args) -> int:
    ds = load_dataset(args.dataset)
    if args.model:
        ds = embed(load_model(args.model), ds)
    report = evaluate(
        ds,
        classifier=args.classifier,
        n=args.nway,
        k=args.kshot,
        q=args.query,
        episodes=args.episodes,
        seed=args.seed,
        topk=args.topk,
        workers=args.workers,
    )
    write_report(report, args.out, args.csv)
    print(
        f"{args.classifier} {args.nway}-way {args.kshot}-shot: "
        f"{100 * report.mean_acc:.2f} +/- {100 * report.ci95:.2f} over {report.n_episodes} episodes"
    )
    return 0


def _cmd_run(args) -> int:
    with open(args.config) as f:
        cfg = json.load(f)
    rows, aggregates = run_experiment(cfg, args.out)
    for agg in aggregates:
        print(
            f"{agg['sweep_key']}={agg['sweep_value']}: "
            f"{100 * agg['mean_acc']:.2f} +/- {100 * agg['std_acc']:.2f} "
            f"({agg['repeats']} repeats)"
        )
    print(f"wrote {len(rows)} result rows to {args.out}")
    return 0


_HANDLERS = {
    "synth": _cmd_synth,
    "stats": _cmd_stats,
    "split": _cmd_split,
    "group": _cmd_group,
    "kmeans": _cmd_kmeans,
    "select": _cmd_select,
    "select-bin": _cmd_select_bin,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "run": _cmd_run,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _HANDLERS[args.command](args)
    except (ValueError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
