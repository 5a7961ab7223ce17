"""Episodic N-way K-shot evaluation with three evaluation-time classifiers.

Episodes are sampled independently, keyed by (seed, episode index), so any
episode can be reproduced or recomputed in parallel without changing the
report. Classifiers score queries against the support set: cosine to the
mean of normalized supports, l2 to the raw support centroid, or summed
softmax attention over per-support cosines.
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .rng import rng_for
from .store import EmbeddingDataset


@dataclass(frozen=True)
class Episode:
    way: int
    shot: int
    query_per_class: int
    class_ids: tuple[int, ...]
    support: np.ndarray  # (way, shot) record ids
    query: np.ndarray  # (way, query_per_class) record ids


@dataclass(frozen=True)
class EvalReport:
    accuracies: np.ndarray
    mean_acc: float
    ci95: float
    config: dict

    @property
    def n_episodes(self) -> int:
        return self.accuracies.shape[0]

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "n_episodes": self.n_episodes,
            "mean_acc": self.mean_acc,
            "ci95": self.ci95,
            "accuracies": [float(a) for a in self.accuracies],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def sample_episode(
    novel: EmbeddingDataset, n: int, k: int, q: int, seed: int, index: int
) -> Episode:
    """One seeded N-way episode: disjoint support and query records per class.

    Classes are drawn uniformly without replacement; a drawn class with
    fewer than k+q records is skipped in favor of the next candidate, and
    the sampler errors once no eligible candidates remain.
    """
    if n < 2 or k < 1 or q < 1:
        raise ValueError(f"invalid episode shape n={n} k={k} q={q}")
    all_ids = novel.class_id_list
    if n > len(all_ids):
        raise ValueError(f"episode needs {n} classes, dataset has {len(all_ids)}")
    rng = rng_for(seed, "episode", index)
    chosen: list[int] = []
    too_small = 0
    for pi in rng.permutation(len(all_ids)):
        cid = all_ids[pi]
        if novel.members_of(cid).shape[0] >= k + q:
            chosen.append(cid)
            if len(chosen) == n:
                break
        else:
            too_small += 1
    if len(chosen) < n:
        raise ValueError(
            f"only {len(chosen)} classes have >= {k + q} records "
            f"({too_small} candidates too small)"
        )
    support = np.empty((n, k), dtype=np.int64)
    query = np.empty((n, q), dtype=np.int64)
    for row, cid in enumerate(chosen):
        mem = novel.members_of(cid)
        pick = rng.choice(mem.shape[0], size=k + q, replace=False)
        support[row] = mem[pick[:k]]
        query[row] = mem[pick[k:]]
    return Episode(
        way=n, shot=k, query_per_class=q, class_ids=tuple(chosen), support=support, query=query
    )


def _normalize(x: np.ndarray, what: str) -> np.ndarray:
    norms = np.linalg.norm(x, axis=-1, keepdims=True)
    if np.any(norms == 0.0):
        raise ValueError(f"zero {what} vector")
    return x / norms


def cc_scores(support: np.ndarray, queries: np.ndarray) -> np.ndarray:
    """Cosine of each query with the mean of normalized supports per class.

    By linearity this equals the average cosine similarity with the class's
    support examples. support is (n, k, d); queries (m, d); result (m, n).
    """
    protos = _normalize(support, "support").mean(axis=1)
    return _normalize(queries, "query") @ protos.T


def proto_scores(support: np.ndarray, queries: np.ndarray) -> np.ndarray:
    """Negative squared l2 distance to the raw (un-normalized) support centroid."""
    centroids = support.mean(axis=1)
    d2 = (
        np.sum(queries * queries, axis=1)[:, None]
        - 2.0 * (queries @ centroids.T)
        + np.sum(centroids * centroids, axis=1)[None, :]
    )
    return -d2


def matching_attention(support: np.ndarray, queries: np.ndarray) -> np.ndarray:
    """Softmax over per-support cosines, (m, n*k); rows sum to 1."""
    n, k, d = support.shape
    sh = _normalize(support.reshape(n * k, d), "support")
    cos = _normalize(queries, "query") @ sh.T
    cos -= cos.max(axis=1, keepdims=True)
    e = np.exp(cos)
    return e / e.sum(axis=1, keepdims=True)


def matching_scores(support: np.ndarray, queries: np.ndarray) -> np.ndarray:
    """Per-class sums of the attention weights."""
    n, k, _ = support.shape
    att = matching_attention(support, queries)
    return att.reshape(att.shape[0], n, k).sum(axis=2)


SCORE_FNS = {"cc": cc_scores, "proto": proto_scores, "matching": matching_scores}


def _episode_arrays(episode: Episode, embeddings) -> tuple[np.ndarray, np.ndarray]:
    vectors = embeddings.vectors if isinstance(embeddings, EmbeddingDataset) else embeddings
    vectors = np.asarray(vectors, dtype=np.float64)
    support = vectors[episode.support]
    queries = vectors[episode.query].reshape(-1, vectors.shape[1])
    return support, queries


def _classify(score_fn, episode: Episode, embeddings) -> np.ndarray:
    support, queries = _episode_arrays(episode, embeddings)
    # argmax takes the first maximum, i.e. the lowest episode-class index
    return np.argmax(score_fn(support, queries), axis=1)


def cc_classify(episode: Episode, embeddings) -> np.ndarray:
    """Predicted episode-class index per query, by average support cosine."""
    return _classify(cc_scores, episode, embeddings)


def proto_classify(episode: Episode, embeddings) -> np.ndarray:
    """Predicted episode-class index per query, by nearest raw centroid."""
    return _classify(proto_scores, episode, embeddings)


def matching_classify(episode: Episode, embeddings) -> np.ndarray:
    """Predicted episode-class index per query, by summed support attention."""
    return _classify(matching_scores, episode, embeddings)


def aggregate_accuracies(accs: np.ndarray) -> tuple[float, float]:
    """(mean, ci95): normal-approximation CI with sample std (n-1 denominator).

    A single episode has no sample std; its ci95 is reported as 0.
    """
    accs = np.asarray(accs, dtype=np.float64)
    mean = float(np.mean(accs))
    n = accs.shape[0]
    ci95 = 0.0 if n < 2 else float(1.96 * np.std(accs, ddof=1) / math.sqrt(n))
    return mean, ci95


def _episode_accuracy(scores: np.ndarray, n: int, q: int, topk: int) -> float:
    true = np.repeat(np.arange(n), q)
    if topk == 1:
        return float(np.mean(np.argmax(scores, axis=1) == true))
    order = np.argsort(-scores, axis=1, kind="stable")
    return float(np.mean(np.any(order[:, :topk] == true[:, None], axis=1)))


def evaluate(
    novel: EmbeddingDataset,
    classifier: str = "cc",
    n: int = 5,
    k: int = 5,
    q: int = 15,
    episodes: int = 10000,
    seed: int = 0,
    topk: int = 1,
    workers: int = 1,
) -> EvalReport:
    """Run seeded episodes and aggregate accuracy with a 95% CI.

    Bitwise deterministic for a given seed: episode i is keyed by
    (seed, i) and results are aggregated in episode-index order, so the
    report does not depend on the worker count.
    """
    if classifier not in SCORE_FNS:
        raise ValueError(f"unknown classifier {classifier!r}")
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    if not 1 <= topk <= n:
        raise ValueError(f"topk must be in [1, {n}]")
    score_fn = SCORE_FNS[classifier]
    vectors = np.asarray(novel.vectors, dtype=np.float64)

    def run_one(index: int) -> float:
        ep = sample_episode(novel, n, k, q, seed, index)
        support = vectors[ep.support]
        queries = vectors[ep.query].reshape(n * q, -1)
        return _episode_accuracy(score_fn(support, queries), n, q, topk)

    accs = np.empty(episodes, dtype=np.float64)
    if workers <= 1:
        for i in range(episodes):
            accs[i] = run_one(i)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for i, acc in enumerate(pool.map(run_one, range(episodes))):
                accs[i] = acc

    mean, ci95 = aggregate_accuracies(accs)
    config = {
        "classifier": classifier,
        "nway": n,
        "kshot": k,
        "query": q,
        "episodes": episodes,
        "seed": seed,
        "topk": topk,
    }
    return EvalReport(accuracies=accs, mean_acc=mean, ci95=ci95, config=config)


REPORT_CSV_COLUMNS = ["classifier", "nway", "kshot", "query", "episodes", "seed", "mean_acc", "ci95"]


def report_csv_row(report: EvalReport) -> list[str]:
    cfg = report.config
    return [
        str(cfg["classifier"]),
        str(cfg["nway"]),
        str(cfg["kshot"]),
        str(cfg["query"]),
        str(cfg["episodes"]),
        str(cfg["seed"]),
        repr(report.mean_acc),
        repr(report.ci95),
    ]


def write_report(report: EvalReport, json_path: str | Path | None, csv_path: str | Path | None):
    if json_path is not None:
        Path(json_path).write_text(report.to_json() + "\n")
    if csv_path is not None:
        lines = [",".join(REPORT_CSV_COLUMNS), ",".join(report_csv_row(report))]
        Path(csv_path).write_text("\n".join(lines) + "\n")
