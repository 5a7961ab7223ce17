"""Redefine the classes of a fixed record set.

Three strategies: balanced bisection of each class along its top principal
direction, balanced greedy pairing of the closest classes by prototype
similarity, and plain Lloyd k-means over normalized vectors (the unbalanced
baseline the other two are compared against).
"""
from __future__ import annotations

import math
import warnings

import numpy as np

from .rng import rng_for
from .stats import class_prototype, normalize_rows
from .store import ClassInfo, EmbeddingDataset, RelabelMap

POWER_ITERS = 100
POWER_TOL = 1e-10


def _canonical_sign(v: np.ndarray) -> np.ndarray:
    # flip so the largest-magnitude coordinate is positive (ties to lowest index)
    i = int(np.argmax(np.abs(v)))
    return -v if v[i] < 0 else v


def top_principal_component(x: np.ndarray) -> np.ndarray | None:
    """Unit top principal direction of the rows of ``x``, sign-canonicalized.

    Power iteration on the centered covariance, started from the first
    coordinate basis vector that is not annihilated by it. Returns None for
    a zero-variance input.
    """
    x = np.asarray(x, dtype=np.float64)
    centered = x - x.mean(axis=0)
    if not np.any(centered):
        return None
    cov = centered.T @ centered
    v = None
    for j in range(cov.shape[0]):
        w = cov[:, j]
        nw = np.linalg.norm(w)
        if nw > 0.0:
            v = w / nw
            break
    if v is None:
        return None
    for _ in range(POWER_ITERS):
        w = cov @ v
        nw = np.linalg.norm(w)
        if nw == 0.0:
            break
        w /= nw
        delta = np.linalg.norm(w - v)
        v = w
        if delta < POWER_TOL:
            break
    return _canonical_sign(v)


def _bisect(ds: EmbeddingDataset, members: np.ndarray, class_id: int):
    """Split one member set into (left, right) halves of sizes ceil/floor.

    Members are ordered by projection onto the top principal direction
    (ties by record id); a zero-variance set falls back to record-id order
    with a warning.
    """
    x = ds.vectors[members].astype(np.float64)
    direction = top_principal_component(x)
    if direction is None:
        warnings.warn(
            f"class {class_id}: zero variance, splitting by record order",
            RuntimeWarning,
            stacklevel=3,
        )
        order = np.arange(members.shape[0])
    else:
        proj = (x - x.mean(axis=0)) @ direction
        order = np.lexsort((members, proj))
    half = (members.shape[0] + 1) // 2
    return members[order[:half]], members[order[half:]]


def bisection_split(ds: EmbeddingDataset, ratio: int) -> RelabelMap:
    """Split every class into ``ratio`` balanced sub-classes (ratio a power of two).

    Each level bisects every current leaf at the median of the projections
    onto its top principal component, so sibling sizes differ by at most 1.
    New class ids are dense, grouped by original class in ascending order.
    """
    ratio = int(ratio)
    if ratio < 2 or ratio & (ratio - 1):
        raise ValueError(f"split ratio must be a power of two >= 2, got {ratio}")
    depth = ratio.bit_length() - 1
    for c in ds.classes:
        if c.count < ratio:
            raise ValueError(f"class {c.id} has {c.count} members, fewer than ratio {ratio}")

    new_class_of = np.empty(ds.n, dtype=np.int64)
    table = []
    for idx, c in enumerate(ds.classes):
        leaves = [ds.members_of(c.id)]
        for _ in range(depth):
            nxt = []
            for leaf in leaves:
                left, right = _bisect(ds, leaf, c.id)
                nxt.extend((left, right))
            leaves = nxt
        for li, leaf in enumerate(leaves):
            new_id = idx * ratio + li
            new_class_of[leaf] = new_id
            table.append(ClassInfo(id=new_id, name=f"{c.name}/{li}", count=leaf.shape[0]))
    return RelabelMap(
        new_class_of=new_class_of,
        new_classes=tuple(table),
        provenance={"method": "split", "ratio": ratio},
    )


def _pairing_pass(prototypes: np.ndarray):
    """One balanced pairing pass: merge order over current class indices.

    Repeatedly merges the unprocessed pair with the highest prototype cosine
    similarity (ties by lexicographically lowest index pair); a leftover
    singleton closes the pass. Returns a list of index tuples.
    """
    c = prototypes.shape[0]
    pn = normalize_rows(prototypes, what="class prototype")
    sim = pn @ pn.T
    sim[np.tril_indices(c)] = -np.inf
    merges: list[tuple[int, ...]] = []
    remaining = c
    while remaining >= 2:
        flat = int(np.argmax(sim))  # row-major argmax = lexicographic tie-break
        i, j = divmod(flat, c)
        merges.append((i, j))
        sim[i, :] = -np.inf
        sim[:, i] = -np.inf
        sim[j, :] = -np.inf
        sim[:, j] = -np.inf
        remaining -= 2
    if remaining == 1:
        taken = {k for pair in merges for k in pair}
        leftover = next(k for k in range(c) if k not in taken)
        merges.append((leftover,))
    return merges


def greedy_group(ds: EmbeddingDataset, ratio: float) -> RelabelMap:
    """Merge classes into meta-classes, one balanced pairing pass per halving.

    ``ratio`` must be a reciprocal power of two <= 1/2. Meta-class prototypes
    for later passes are the unweighted mean of the prototypes merged in the
    previous pass.
    """
    inv = 1.0 / float(ratio)
    k = round(inv)
    if abs(inv - k) > 1e-9 or k < 2 or k & (k - 1):
        raise ValueError(f"group ratio must be a reciprocal power of two <= 1/2, got {ratio}")
    passes = k.bit_length() - 1
    if len(ds.classes) < 2:
        raise ValueError("grouping needs at least two classes")

    names = {c.id: c.name for c in ds.classes}
    # (member original class ids, prototype) per current-level class
    level: list[tuple[list[int], np.ndarray]] = [
        ([c.id], class_prototype(ds.class_vectors(c.id))) for c in ds.classes
    ]
    merge_sequence: list[list[list[int]]] = []
    for _ in range(passes):
        if len(level) < 2:
            break
        merges = _pairing_pass(np.stack([p for _, p in level]))
        merge_sequence.append([list(pair) for pair in merges if len(pair) == 2])
        nxt = []
        for pair in merges:
            members = [cid for idx in pair for cid in level[idx][0]]
            proto = np.mean([level[idx][1] for idx in pair], axis=0)
            nxt.append((members, proto))
        level = nxt

    new_class_of = np.empty(ds.n, dtype=np.int64)
    table = []
    for new_id, (member_cids, _) in enumerate(level):
        for cid in member_cids:
            new_class_of[ds.members_of(cid)] = new_id
        name = "+".join(names[cid] for cid in sorted(member_cids))
        count = int(sum(ds.members_of(cid).shape[0] for cid in member_cids))
        table.append(ClassInfo(id=new_id, name=name, count=count))
    return RelabelMap(
        new_class_of=new_class_of,
        new_classes=tuple(table),
        provenance={
            "method": "group",
            "ratio": float(ratio),
            "passes": passes,
            "merge_sequence": merge_sequence,
        },
    )


def _wcss(x: np.ndarray, centroids: np.ndarray, assign: np.ndarray) -> float:
    return float(np.sum((x - centroids[assign]) ** 2))


def kmeans_relabel(
    ds: EmbeddingDataset, k: int, seed: int = 0, max_iters: int = 100
) -> RelabelMap:
    """Lloyd k-means over l2-normalized vectors, as an unbalanced relabeling.

    Initial centroids are k records sampled without replacement; assignments
    break ties to the lowest centroid index; an emptied cluster is re-seeded
    with the point farthest from its current centroid. The per-iteration
    within-cluster sum of squares is recorded in the provenance.
    """
    if k <= 0:
        raise ValueError(f"k must be positive, got {k}")
    if k > ds.n:
        raise ValueError(f"k={k} exceeds {ds.n} records")
    if max_iters < 1:
        raise ValueError(f"max_iters must be >= 1, got {max_iters}")
    x = normalize_rows(ds.vectors)
    rng = rng_for(seed, "kmeans-init")
    centroids = x[np.sort(rng.choice(ds.n, size=k, replace=False))].copy()

    assign = None
    history: list[float] = []
    for _ in range(max_iters):
        d2 = (
            np.sum(x * x, axis=1)[:, None]
            - 2.0 * (x @ centroids.T)
            + np.sum(centroids * centroids, axis=1)[None, :]
        )
        new_assign = np.argmin(d2, axis=1)
        counts = np.bincount(new_assign, minlength=k)
        for e in np.flatnonzero(counts == 0):
            own = d2[np.arange(ds.n), new_assign]
            own[counts[new_assign] < 2] = -np.inf  # never empty another cluster
            p = int(np.argmax(own))
            counts[new_assign[p]] -= 1
            new_assign[p] = e
            counts[e] = 1
            centroids[e] = x[p]
        if assign is not None and np.array_equal(new_assign, assign):
            break
        assign = new_assign
        for j in range(k):
            centroids[j] = x[assign == j].mean(axis=0)
        history.append(_wcss(x, centroids, assign))

    table = tuple(
        ClassInfo(id=j, name=f"kmeans_{j}", count=int(np.sum(assign == j))) for j in range(k)
    )
    return RelabelMap(
        new_class_of=assign,
        new_classes=table,
        provenance={
            "method": "kmeans",
            "k": k,
            "seed": seed,
            "max_iters": max_iters,
            "n_iters": len(history),
            "objective": history,
        },
    )


def ratio_relabel(ds: EmbeddingDataset, ratio: float) -> RelabelMap | None:
    """Balanced relabel at class ratio ``ratio``: split above 1, group below, None at 1."""
    if ratio == 1 or math.isclose(ratio, 1.0):
        return None
    if ratio > 1:
        return bisection_split(ds, int(round(ratio)))
    return greedy_group(ds, ratio)
