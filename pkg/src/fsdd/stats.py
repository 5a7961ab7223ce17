"""Class-level measures driving selection and relabeling decisions.

A class is represented by its prototype, the mean of its l2-normalized
member vectors (not re-normalized). Diversity is the variance of the
normalized members (trace of their covariance). Difficulty is held-out
nearest-prototype accuracy under a seeded split. Distance to a test set is
the mean cosine distance from the class prototype to the test prototypes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .rng import rng_for
from .store import EmbeddingDataset


def normalize_rows(x: np.ndarray, what: str = "vector") -> np.ndarray:
    """Rows scaled to unit l2 norm, in float64. Raises on a zero row."""
    x = np.asarray(x, dtype=np.float64)
    norms = np.linalg.norm(x, axis=1)
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        raise ValueError(f"zero {what} at row {int(zero[0])}")
    return x / norms[:, None]


def class_prototype(vectors: np.ndarray) -> np.ndarray:
    """Mean of the l2-normalized input vectors. Not re-normalized."""
    vectors = np.atleast_2d(np.asarray(vectors, dtype=np.float64))
    if vectors.shape[0] == 0:
        raise ValueError("class_prototype of an empty set")
    return normalize_rows(vectors).mean(axis=0)


def class_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity between two prototypes, clipped into [-1, 1]."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ValueError("zero prototype")
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def class_diversity(vectors: np.ndarray) -> float:
    """Mean squared deviation of normalized members from their prototype.

    Equals the trace of the covariance (1/n denominator) of the normalized
    features; 0 exactly when all normalized members coincide.
    """
    xn = normalize_rows(np.atleast_2d(np.asarray(vectors, dtype=np.float64)))
    if xn.shape[0] == 0:
        raise ValueError("class_diversity of an empty set")
    if np.all(xn == xn[0]):  # exact zero for constant classes
        return 0.0
    mu = xn.mean(axis=0)
    return float(np.mean(np.sum((xn - mu) ** 2, axis=1)))


def distance_to_test(base, test_prototypes) -> float:
    """Mean of (1 - cosine) from a base prototype to each test prototype."""
    proto = getattr(base, "prototype", base)
    proto = np.asarray(proto, dtype=np.float64)
    tests = np.atleast_2d(np.asarray(test_prototypes, dtype=np.float64))
    if tests.shape[0] == 0:
        raise ValueError("empty test prototype set")
    np_ = np.linalg.norm(proto)
    if np_ == 0.0:
        raise ValueError("zero prototype")
    tn = normalize_rows(tests, what="test prototype")
    cos = tn @ (proto / np_)
    return float(np.mean(1.0 - np.clip(cos, -1.0, 1.0)))


def _holdout_count(m: int, fraction: float) -> int:
    # at least one record held out, at least one retained
    return min(m - 1, max(1, math.floor(m * fraction))) if m >= 2 else 0


def _holdout_split(members: np.ndarray, fraction: float, seed: int):
    """Deterministic (held_out, retained) record ids for one class.

    The permutation is keyed by the seed alone and depends only on the class
    size, so classes with identical member lists receive identical splits.
    """
    m = members.shape[0]
    k = _holdout_count(m, fraction)
    perm = rng_for(seed, "difficulty-holdout").permutation(m)
    return members[perm[:k]], members[perm[k:]]


def class_difficulty(
    ds: EmbeddingDataset, class_id: int, holdout_fraction: float = 0.2, seed: int = 0
) -> float:
    """Held-out nearest-prototype (cosine) accuracy of one class.

    Every class is split with the same seeded rule; prototypes use only the
    retained members. The held-out members of ``class_id`` are classified
    against all class prototypes, ties going to the lowest class id; the
    returned value is the fraction assigned back to ``class_id``.
    """
    accs = class_difficulties(ds, holdout_fraction=holdout_fraction, seed=seed)
    if class_id not in accs:
        raise ValueError(f"unknown class id {class_id}")
    return accs[class_id]


def class_difficulties(
    ds: EmbeddingDataset, holdout_fraction: float = 0.2, seed: int = 0
) -> dict[int, float]:
    """Held-out accuracy for every class with >= 2 members, one shared split."""
    if not 0.0 < holdout_fraction < 1.0:
        raise ValueError(f"holdout_fraction must be in (0, 1), got {holdout_fraction}")
    if len(ds.classes) < 2:
        raise ValueError("difficulty needs at least two classes")
    held: dict[int, np.ndarray] = {}
    protos = []
    ids = []
    for c in ds.classes:
        out, kept = _holdout_split(ds.members_of(c.id), holdout_fraction, seed)
        if kept.shape[0] == 0:
            raise ValueError(f"class {c.id} retains no members at fraction {holdout_fraction}")
        protos.append(class_prototype(ds.vectors[kept]))
        ids.append(c.id)
        if out.shape[0]:
            held[c.id] = out
    proto_mat = normalize_rows(np.stack(protos), what="class prototype")
    id_arr = np.asarray(ids)
    result: dict[int, float] = {}
    for cid, out in held.items():
        if out.shape[0] < 1 or ds.members_of(cid).shape[0] < 2:
            continue
        q = normalize_rows(ds.vectors[out].astype(np.float64))
        # columns are in ascending class-id order, so argmax breaks ties low
        pred = id_arr[np.argmax(q @ proto_mat.T, axis=1)]
        result[cid] = float(np.mean(pred == cid))
    return result


@dataclass(frozen=True)
class ClassStats:
    class_id: int
    n_members: int
    prototype: np.ndarray
    diversity: float
    difficulty: float | None = None
    dist_to_test: float | None = None


def dataset_prototypes(ds: EmbeddingDataset) -> np.ndarray:
    """Prototype matrix (C, dim), rows in ascending class-id order."""
    return np.stack([class_prototype(ds.class_vectors(c.id)) for c in ds.classes])


def compute_class_stats(
    ds: EmbeddingDataset,
    test_prototypes: np.ndarray | None = None,
    with_difficulty: bool = False,
    holdout_fraction: float = 0.2,
    seed: int = 0,
) -> list[ClassStats]:
    """Per-class stats table, ascending class-id order."""
    difficulties = (
        class_difficulties(ds, holdout_fraction=holdout_fraction, seed=seed)
        if with_difficulty
        else {}
    )
    out = []
    for c in ds.classes:
        vecs = ds.class_vectors(c.id)
        proto = class_prototype(vecs)
        out.append(
            ClassStats(
                class_id=c.id,
                n_members=c.count,
                prototype=proto,
                diversity=class_diversity(vecs),
                difficulty=difficulties.get(c.id),
                dist_to_test=(
                    distance_to_test(proto, test_prototypes)
                    if test_prototypes is not None
                    else None
                ),
            )
        )
    return out


def stats_by_id(stats: Sequence[ClassStats]) -> dict[int, ClassStats]:
    return {s.class_id: s for s in stats}
