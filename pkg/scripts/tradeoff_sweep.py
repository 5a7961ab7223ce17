"""Class count vs images per class at a fixed annotation budget.

Sweeps the number of randomly selected base classes while the total image
budget stays constant, so more classes means fewer images each. The
interesting output is the position of the accuracy optimum.
"""
import argparse
from pathlib import Path

from fsdd.runner import run_experiment


def build_config(seed: int, repeats: int, budget: int, class_counts: list[int]) -> dict:
    return {
        "seed": seed,
        "repeats": repeats,
        "artifacts": False,
        "data": {
            "synth": {
                "dim": 64, "n_super": 16, "classes_per_super": 6, "images_per_class": 120,
                "super_separation": 1.2, "intra_super_spread": 0.4,
                "within_class_noise": 0.3, "class_subspace_dim": 4,
                "novel_fraction": 0.25, "placement": "near",
            }
        },
        "design": {"select": {"mode": "random", "classes": 24, "budget": budget}},
        "train": {"kind": "mlp1", "out_dim": 8, "epochs": 60, "batch_size": 32},
        "eval": {"classifier": "cc", "nway": 5, "kshot": 5, "query": 15, "episodes": 150},
        "sweep": {"key": "design.select.classes", "values": class_counts},
    }


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="runs/tradeoff_sweep")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--budget", type=int, default=252)
    parser.add_argument("--classes", type=int, nargs="+", default=[4, 8, 16, 24, 48, 84])
    args = parser.parse_args()

    cfg = build_config(args.seed, args.repeats, args.budget, args.classes)
    _, aggregates = run_experiment(cfg, args.out)
    print(f"\nfixed budget of {args.budget} images, {args.repeats} repeats:")
    for agg in aggregates:
        c = agg["sweep_value"]
        print(
            f"  C={c:3d} (m={args.budget // c:3d}): "
            f"{100 * agg['mean_acc']:5.1f} +/- {100 * agg['std_acc']:4.1f}"
        )
    print(f"\nCSV written under {Path(args.out).resolve()}")


if __name__ == "__main__":
    main()
