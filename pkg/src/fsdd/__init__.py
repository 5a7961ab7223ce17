"""fsdd: design and evaluate base training datasets for few-shot classification."""

__version__ = "0.1.0"

from .fewshot import (
    Episode,
    EvalReport,
    cc_classify,
    evaluate,
    matching_classify,
    proto_classify,
    sample_episode,
)
from .learner import Embedder, TrainConfig, embed, load_model, save_model, train_embedder
from .relabel import bisection_split, greedy_group, kmeans_relabel
from .runner import run_experiment
from .selection import (
    SelectionSpec,
    bin_by_metric,
    budget_sample,
    distance_filtered_sample,
    select_by_similarity,
)
from .stats import (
    ClassStats,
    class_difficulty,
    class_diversity,
    class_prototype,
    class_similarity,
    compute_class_stats,
    distance_to_test,
)
from .store import (
    ClassInfo,
    DatasetError,
    EmbeddingDataset,
    RelabelMap,
    apply_relabel,
    load_dataset,
    load_relabel,
    save_dataset,
    save_relabel,
    subset,
)
from .synth import BaseNovelSplit, SynthSpec, gen_base_novel, gen_hierarchical

__all__ = [
    "BaseNovelSplit",
    "ClassInfo",
    "ClassStats",
    "DatasetError",
    "Embedder",
    "EmbeddingDataset",
    "Episode",
    "EvalReport",
    "RelabelMap",
    "SelectionSpec",
    "SynthSpec",
    "TrainConfig",
    "apply_relabel",
    "bin_by_metric",
    "bisection_split",
    "budget_sample",
    "cc_classify",
    "class_difficulty",
    "class_diversity",
    "class_prototype",
    "class_similarity",
    "compute_class_stats",
    "distance_filtered_sample",
    "distance_to_test",
    "embed",
    "evaluate",
    "gen_base_novel",
    "gen_hierarchical",
    "greedy_group",
    "kmeans_relabel",
    "load_dataset",
    "load_model",
    "load_relabel",
    "matching_classify",
    "proto_classify",
    "run_experiment",
    "sample_episode",
    "save_dataset",
    "save_model",
    "save_relabel",
    "select_by_similarity",
    "subset",
    "train_embedder",
]
