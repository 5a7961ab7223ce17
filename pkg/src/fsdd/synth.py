"""Seeded synthetic embeddings with a known super-cluster hierarchy.

Super-cluster centers sit on the unit sphere with a minimum pairwise
distance; class centers scatter around their super center; records scatter
around their class center. The returned ground truth maps classes to
super-clusters so grouping and selection behavior can be checked exactly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .rng import rng_for
from .store import ClassInfo, EmbeddingDataset, subset

CENTER_RETRY_BUDGET = 1000


class SynthError(ValueError):
    pass


@dataclass(frozen=True)
class SynthSpec:
    dim: int
    n_super: int
    classes_per_super: int
    images_per_class: int
    super_separation: float = 1.0
    intra_super_spread: float = 0.1
    within_class_noise: float = 0.05
    class_subspace_dim: int | None = None
    seed: int = 0

    def __post_init__(self):
        if min(self.dim, self.n_super, self.classes_per_super, self.images_per_class) < 1:
            raise SynthError("dim, n_super, classes_per_super and images_per_class must be >= 1")
        if not self.super_separation > self.intra_super_spread > self.within_class_noise >= 0:
            raise SynthError(
                "need super_separation > intra_super_spread > within_class_noise >= 0"
            )
        if self.class_subspace_dim is not None and not 1 <= self.class_subspace_dim <= self.dim:
            raise SynthError(f"class_subspace_dim must be in [1, {self.dim}]")


def _sphere_centers(rng, n: int, dim: int, min_dist: float) -> np.ndarray:
    centers: list[np.ndarray] = []
    rejected = 0
    best = -math.inf
    while len(centers) < n:
        c = rng.normal(size=dim)
        c /= np.linalg.norm(c)
        dmin = min((np.linalg.norm(c - o) for o in centers), default=math.inf)
        if dmin >= min_dist:
            centers.append(c)
        else:
            rejected += 1
            best = max(best, dmin)
            if rejected > CENTER_RETRY_BUDGET:
                raise SynthError(
                    f"cannot place {n} centers at separation {min_dist} in dim {dim}; "
                    f"best rejected candidate reached {best:.4f}"
                )
    return np.stack(centers)


def gen_hierarchical(spec: SynthSpec) -> tuple[EmbeddingDataset, dict[int, int]]:
    """Dataset plus ground-truth class -> super-cluster map.

    With ``class_subspace_dim`` set, each super-cluster's class centers are
    displaced only inside a super-specific random subspace of that rank, so
    the directions that tell one class from its siblings are shared within
    a super-cluster and (near-)orthogonal across super-clusters. Within-class
    noise is always isotropic.
    """
    rng = rng_for(spec.seed, "synth")
    supers = _sphere_centers(rng, spec.n_super, spec.dim, spec.super_separation)
    bases = None
    if spec.class_subspace_dim is not None:
        bases = [
            np.linalg.qr(rng.normal(size=(spec.dim, spec.class_subspace_dim)))[0]
            for _ in range(spec.n_super)
        ]
    n_classes = spec.n_super * spec.classes_per_super
    class_centers = np.empty((n_classes, spec.dim))
    ground_truth: dict[int, int] = {}
    cid = 0
    for si in range(spec.n_super):
        for _ in range(spec.classes_per_super):
            if bases is None:
                offset = rng.normal(scale=spec.intra_super_spread, size=spec.dim)
            else:
                offset = bases[si] @ rng.normal(
                    scale=spec.intra_super_spread, size=spec.class_subspace_dim
                )
            class_centers[cid] = supers[si] + offset
            ground_truth[cid] = si
            cid += 1
    vectors = np.empty((n_classes * spec.images_per_class, spec.dim), dtype=np.float32)
    labels = np.empty(n_classes * spec.images_per_class, dtype=np.int64)
    row = 0
    for cid in range(n_classes):
        for _ in range(spec.images_per_class):
            vectors[row] = class_centers[cid] + rng.normal(
                scale=spec.within_class_noise, size=spec.dim
            )
            labels[row] = cid
            row += 1
    classes = tuple(
        ClassInfo(id=c, name=f"s{ground_truth[c]}_c{c}", count=spec.images_per_class)
        for c in range(n_classes)
    )
    ds = EmbeddingDataset(dim=spec.dim, vectors=vectors, class_ids=labels, classes=classes)
    return ds, ground_truth


@dataclass(frozen=True)
class BaseNovelSplit:
    """Base pool and novel set with the placement bookkeeping for validation."""

    base: EmbeddingDataset
    novel: EmbeddingDataset
    base_tags: dict[int, str]  # base class id -> "near" | "far"
    class_to_super: dict[int, int]
    novel_supers: tuple[int, ...]


def gen_base_novel(
    spec: SynthSpec, novel_fraction: float, placement: str = "near", seed: int = 0
) -> BaseNovelSplit:
    """Split a hierarchical instance into a base pool and a novel set.

    A seeded fraction of super-clusters is designated novel. With
    placement="near" the novel classes are half of each novel super's
    classes and the other half stays in the base pool (tagged "near") next
    to all classes of the remaining supers (tagged "far"). With
    placement="far" the novel supers contribute nothing to the base pool.
    """
    if not 0.0 < novel_fraction < 1.0:
        raise SynthError(f"novel_fraction must be in (0, 1), got {novel_fraction}")
    if placement not in ("near", "far"):
        raise SynthError(f"placement must be near or far, got {placement!r}")
    full, ground_truth = gen_hierarchical(replace(spec, seed=seed))
    n_novel_supers = max(1, round(spec.n_super * novel_fraction))
    if n_novel_supers >= spec.n_super:
        raise SynthError(
            f"novel_fraction {novel_fraction} leaves no base supers out of {spec.n_super}"
        )
    if placement == "near" and spec.classes_per_super < 2:
        raise SynthError("placement=near needs >= 2 classes per super")
    rng = rng_for(seed, "base-novel")
    novel_supers = tuple(
        sorted(int(s) for s in rng.choice(spec.n_super, size=n_novel_supers, replace=False))
    )

    novel_classes: list[int] = []
    base_tags: dict[int, str] = {}
    for si in range(spec.n_super):
        members = [cid for cid, s in ground_truth.items() if s == si]
        if si not in novel_supers:
            for cid in members:
                base_tags[cid] = "far"
        elif placement == "far":
            novel_classes.extend(members)
        else:
            take = (len(members) + 1) // 2
            pick = set(rng.choice(len(members), size=take, replace=False).tolist())
            for i, cid in enumerate(members):
                if i in pick:
                    novel_classes.append(cid)
                else:
                    base_tags[cid] = "near"

    base = subset(full, {cid: full.members_of(cid) for cid in base_tags})
    novel = subset(full, {cid: full.members_of(cid) for cid in novel_classes})
    return BaseNovelSplit(
        base=base,
        novel=novel,
        base_tags=base_tags,
        class_to_super=ground_truth,
        novel_supers=novel_supers,
    )
