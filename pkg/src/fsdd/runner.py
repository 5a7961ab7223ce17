"""Config-driven experiment orchestration.

One JSON config describes the full pipeline (data -> base-set design ->
embedder training -> episodic evaluation) plus an optional sweep over a
single dotted config key and a repeat count. Every default is materialized
into the echoed config so a run directory is self-describing, and repeat r
derives every stage seed from base_seed + r, so re-running a config
reproduces all outputs byte for byte.
"""
from __future__ import annotations

import copy
import csv
import json
import math
from pathlib import Path

from .fewshot import evaluate
from .learner import TrainConfig, embed, save_model, train_embedder
from .relabel import greedy_group, kmeans_relabel, ratio_relabel
from .rng import RNG_ALGORITHM
from .selection import bin_by_metric, budget_sample, distance_filtered_sample, select_by_similarity
from .stats import compute_class_stats, dataset_prototypes
from .store import EmbeddingDataset, apply_relabel, load_dataset, save_dataset, subset
from .synth import SynthSpec, gen_base_novel

RESULTS_COLUMNS = [
    "sweep_key",
    "sweep_value",
    "repeat",
    "classifier",
    "nway",
    "kshot",
    "mean_acc",
    "ci95",
]
AGGREGATE_COLUMNS = [
    "sweep_key",
    "sweep_value",
    "repeats",
    "classifier",
    "nway",
    "kshot",
    "mean_acc",
    "std_acc",
]

_DEFAULTS: dict = {
    "seed": 0,
    "repeats": 1,
    "artifacts": True,
    "data": {},
    "design": {"select": None, "relabel": None},
    "train": {
        "kind": "identity",
        "out_dim": None,
        "epochs": 30,
        "batch_size": 64,
        "learning_rate": 0.05,
        "momentum": 0.9,
        "weight_decay": 5e-4,
        "cosine_scale": 10.0,
        "lr_decay_epochs": [],
        "lr_decay_factor": 10.0,
        "warmup_steps": 0,
    },
    "eval": {
        "classifier": "cc",
        "nway": 5,
        "kshot": 5,
        "query": 15,
        "episodes": 600,
        "topk": 1,
        "workers": 1,
    },
    "sweep": None,
}

_SELECT_DEFAULTS = {
    "mode": "random",
    "classes": None,
    "budget": None,
    "images_per_class": None,
    "bin_metric": None,
    "bin_index": None,
    "band": [0.4, 0.6],
    "holdout_fraction": 0.2,
}
_RELABEL_DEFAULTS = {"method": "balanced", "ratio": 1.0, "k": None, "max_iters": 100}


class ConfigError(ValueError):
    pass


def _merge(defaults: dict, user: dict, path: str) -> dict:
    out = copy.deepcopy(defaults)
    if not defaults:  # free-form section (e.g. data)
        return copy.deepcopy(user)
    for key, value in user.items():
        if key not in defaults:
            raise ConfigError(f"unknown config key {path}{key}")
        if isinstance(defaults[key], dict) and isinstance(value, dict):
            out[key] = _merge(defaults[key], value, f"{path}{key}.")
        else:
            out[key] = copy.deepcopy(value)
    return out


def resolve_config(cfg: dict) -> dict:
    """Fill defaults, validate, and stamp the RNG algorithm identifier."""
    resolved = _merge(_DEFAULTS, cfg, "")
    design = resolved["design"]
    if design.get("select") is not None:
        design["select"] = _merge(_SELECT_DEFAULTS, design["select"], "design.select.")
        if design["select"]["classes"] is None:
            raise ConfigError("design.select.classes is required")
        ipc, budget = design["select"]["images_per_class"], design["select"]["budget"]
        if (ipc is None) == (budget is None):
            raise ConfigError("design.select needs exactly one of images_per_class and budget")
    if design.get("relabel") is not None:
        design["relabel"] = _merge(_RELABEL_DEFAULTS, design["relabel"], "design.relabel.")
        if design["relabel"]["method"] not in ("balanced", "kmeans"):
            raise ConfigError(f"unknown relabel method {design['relabel']['method']!r}")
    if resolved["repeats"] < 1:
        raise ConfigError("repeats must be >= 1")
    data = resolved["data"]
    if "synth" in data and data["synth"]:
        pass
    elif "base" in data and "novel" in data:
        for key in ("base", "novel"):
            if not Path(data[key]).is_dir():
                raise ConfigError(f"data.{key} does not exist: {data[key]}")
    else:
        raise ConfigError("data must provide either synth parameters or base+novel paths")
    sweep = resolved["sweep"]
    if sweep is not None:
        if "key" not in sweep or "values" not in sweep:
            raise ConfigError("sweep needs key and values")
        if not sweep["values"]:
            raise ConfigError("sweep.values must not be empty")
    resolved["rng_algorithm"] = RNG_ALGORITHM
    return resolved


def _set_path(cfg: dict, dotted: str, value) -> None:
    parts = dotted.split(".")
    node = cfg
    for part in parts[:-1]:
        if not isinstance(node, dict) or part not in node or node[part] is None:
            raise ConfigError(f"sweep key {dotted!r} does not resolve in the config")
        node = node[part]
    if not isinstance(node, dict) or parts[-1] not in node:
        raise ConfigError(f"sweep key {dotted!r} does not resolve in the config")
    node[parts[-1]] = value


def _materialize_data(data_cfg: dict, repeat_seed: int):
    if data_cfg.get("synth"):
        synth = dict(data_cfg["synth"])
        novel_fraction = synth.pop("novel_fraction", 0.25)
        placement = synth.pop("placement", "near")
        synth.pop("seed", None)
        spec = SynthSpec(seed=repeat_seed, **synth)
        split = gen_base_novel(spec, novel_fraction, placement, seed=repeat_seed)
        return split.base, split.novel
    return load_dataset(data_cfg["base"]), load_dataset(data_cfg["novel"])


def _design_base(
    base: EmbeddingDataset, novel: EmbeddingDataset, design: dict, repeat_seed: int
) -> EmbeddingDataset:
    sel = design.get("select")
    if sel is not None:
        test_protos = dataset_prototypes(novel)
        with_difficulty = sel["mode"] == "bin" and sel["bin_metric"] == "difficulty"
        stats = compute_class_stats(
            base,
            test_prototypes=test_protos,
            with_difficulty=with_difficulty,
            holdout_fraction=sel["holdout_fraction"],
            seed=repeat_seed,
        )
        count = sel["classes"]
        if sel["mode"] == "bin":
            bins = bin_by_metric(stats, sel["bin_metric"])
            chosen = distance_filtered_sample(
                bins[sel["bin_index"]],
                stats,
                test_protos,
                count,
                band=tuple(sel["band"]),
                seed=repeat_seed,
            )
        else:
            chosen = select_by_similarity(stats, test_protos, sel["mode"], count, seed=repeat_seed)
        budget = sel["budget"] if sel["budget"] is not None else sel["images_per_class"] * count
        base = subset(base, budget_sample(base, chosen, budget, seed=repeat_seed))
    rel = design.get("relabel")
    if rel is not None:
        if rel["method"] == "kmeans":
            k = rel["k"]
            if k is None:
                k = max(1, round(rel["ratio"] * len(base.classes)))
            rmap = kmeans_relabel(base, k, seed=repeat_seed, max_iters=rel["max_iters"])
        else:
            ratio = rel["ratio"]
            rmap = ratio_relabel(base, ratio) if ratio != 1 else None
        if rmap is not None:
            base = apply_relabel(base, rmap)
    return base


def _run_point(cfg: dict, repeat_seed: int, workdir: Path | None):
    base, novel = _materialize_data(cfg["data"], repeat_seed)
    base = _design_base(base, novel, cfg["design"], repeat_seed)
    train = cfg["train"]
    tcfg = TrainConfig(
        epochs=train["epochs"],
        batch_size=min(train["batch_size"], base.n),
        learning_rate=train["learning_rate"],
        momentum=train["momentum"],
        weight_decay=train["weight_decay"],
        cosine_scale=train["cosine_scale"],
        seed=repeat_seed,
        lr_decay_epochs=tuple(train["lr_decay_epochs"]),
        lr_decay_factor=train["lr_decay_factor"],
        warmup_steps=train["warmup_steps"],
    )
    embedder = train_embedder(base, tcfg, kind=train["kind"], out_dim=train["out_dim"])
    novel_emb = embed(embedder, novel)
    ev = cfg["eval"]
    report = evaluate(
        novel_emb,
        classifier=ev["classifier"],
        n=ev["nway"],
        k=ev["kshot"],
        q=ev["query"],
        episodes=ev["episodes"],
        seed=repeat_seed,
        topk=ev["topk"],
        workers=ev["workers"],
    )
    if workdir is not None:
        workdir.mkdir(parents=True, exist_ok=True)
        save_dataset(base, workdir / "base")
        save_model(embedder, workdir / "model.json")
        (workdir / "report.json").write_text(report.to_json() + "\n")
    return report


def _write_csv(path: Path, columns: list[str], rows: list[dict]) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_cell(row[c]) for c in columns])


def _cell(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def run_experiment(cfg: dict, out_dir: str | Path) -> tuple[list[dict], list[dict]]:
    """Execute every sweep point x repeat; write results.csv and aggregate.csv."""
    resolved = resolve_config(cfg)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.resolved.json").write_text(
        json.dumps(resolved, indent=1, sort_keys=True) + "\n"
    )
    sweep = resolved["sweep"]
    points = [(sweep["key"], v) for v in sweep["values"]] if sweep else [("", "")]

    rows: list[dict] = []
    aggregates: list[dict] = []
    ev = resolved["eval"]
    for pi, (key, value) in enumerate(points):
        point_cfg = copy.deepcopy(resolved)
        if key:
            _set_path(point_cfg, key, value)
        repeat_means = []
        for r in range(resolved["repeats"]):
            repeat_seed = resolved["seed"] + r
            workdir = out_dir / "points" / f"{pi:03d}_{r}" if resolved["artifacts"] else None
            report = _run_point(point_cfg, repeat_seed, workdir)
            repeat_means.append(report.mean_acc)
            rows.append(
                {
                    "sweep_key": key,
                    "sweep_value": value,
                    "repeat": r,
                    "classifier": ev["classifier"],
                    "nway": ev["nway"],
                    "kshot": ev["kshot"],
                    "mean_acc": report.mean_acc,
                    "ci95": report.ci95,
                }
            )
        n_rep = len(repeat_means)
        mean = sum(repeat_means) / n_rep
        std = (
            math.sqrt(sum((m - mean) ** 2 for m in repeat_means) / (n_rep - 1))
            if n_rep > 1
            else 0.0
        )
        aggregates.append(
            {
                "sweep_key": key,
                "sweep_value": value,
                "repeats": n_rep,
                "classifier": ev["classifier"],
                "nway": ev["nway"],
                "kshot": ev["kshot"],
                "mean_acc": mean,
                "std_acc": std,
            }
        )
    _write_csv(out_dir / "results.csv", RESULTS_COLUMNS, rows)
    _write_csv(out_dir / "aggregate.csv", AGGREGATE_COLUMNS, aggregates)
    return rows, aggregates
