"""Balanced grouping vs plain k-means relabeling on a superclass-pair instance.

The base classes come in sibling pairs (two classes per super-cluster).
Balanced greedy grouping merges each pair back into its super-cluster;
k-means with the same target class count produces unbalanced clusters.
Both relabelings train the same embedder and are scored on held-out novel
classes.
"""
import argparse

import numpy as np

from fsdd.fewshot import evaluate
from fsdd.learner import TrainConfig, embed, train_embedder
from fsdd.relabel import greedy_group, kmeans_relabel
from fsdd.store import apply_relabel
from fsdd.synth import SynthSpec, gen_base_novel


def run_once(seed: int, method: str, episodes: int) -> float:
    spec = SynthSpec(
        dim=32, n_super=12, classes_per_super=2, images_per_class=30,
        super_separation=1.0, intra_super_spread=0.08, within_class_noise=0.03,
        seed=seed,
    )
    split = gen_base_novel(spec, 0.25, "far", seed=seed)
    if method == "group":
        rmap = greedy_group(split.base, 0.5)
    else:
        rmap = kmeans_relabel(split.base, len(split.base.classes) // 2, seed=seed)
    base = apply_relabel(split.base, rmap)
    cfg = TrainConfig(epochs=30, batch_size=32, seed=seed)
    embedder = train_embedder(base, cfg, kind="linear", out_dim=8)
    report = evaluate(embed(embedder, split.novel), "cc", n=5, k=5, q=15,
                      episodes=episodes, seed=seed)
    return report.mean_acc


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seeds", type=int, default=5)
    parser.add_argument("--episodes", type=int, default=300)
    args = parser.parse_args()

    for method in ("group", "kmeans"):
        accs = [run_once(seed, method, args.episodes) for seed in range(args.seeds)]
        print(
            f"{method:>6s}: {100 * np.mean(accs):5.2f} +/- {100 * np.std(accs):4.2f} "
            f"({[round(100 * a, 1) for a in accs]})"
        )


if __name__ == "__main__":
    main()
