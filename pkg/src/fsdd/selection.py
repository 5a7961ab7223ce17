"""Build base datasets under constraints: class selection and image budgets.

Selection modes rank candidate classes by distance to the test prototypes
(closest/farthest) or draw them uniformly (random). Budget sampling takes
the same number of images from every chosen class. Decile binning by a
class metric supports the diversity/difficulty studies, with an optional
distance band that keeps the per-bin distance-to-test comparable.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .rng import rng_for
from .stats import ClassStats, distance_to_test
from .store import EmbeddingDataset

logger = logging.getLogger(__name__)

SELECT_MODES = ("random", "closest", "farthest", "bin")
BIN_COUNT = 10


@dataclass(frozen=True)
class SelectionSpec:
    mode: str
    count: int
    images_per_class: int | None = None
    budget: int | None = None
    bin_metric: str | None = None
    bin_index: int | None = None
    distance_band: tuple[float, float] | None = None
    seed: int = 0

    def __post_init__(self):
        if self.mode not in SELECT_MODES:
            raise ValueError(f"unknown selection mode {self.mode!r}")
        if self.count < 1:
            raise ValueError("count must be >= 1")
        if (self.images_per_class is None) == (self.budget is None):
            raise ValueError("exactly one of images_per_class and budget must be set")
        if self.mode == "bin":
            if self.bin_metric not in ("diversity", "difficulty"):
                raise ValueError(f"bin_metric must be diversity or difficulty, got {self.bin_metric!r}")
            if self.bin_index is None or not 0 <= self.bin_index < BIN_COUNT:
                raise ValueError(f"bin_index must be in [0, {BIN_COUNT})")

    @property
    def total_budget(self) -> int:
        return self.budget if self.budget is not None else self.images_per_class * self.count


def _distances(pool_stats: Sequence[ClassStats], test_prototypes) -> dict[int, float]:
    return {
        s.class_id: (
            s.dist_to_test
            if s.dist_to_test is not None
            else distance_to_test(s.prototype, test_prototypes)
        )
        for s in pool_stats
    }


def select_by_similarity(
    pool_stats: Sequence[ClassStats],
    test_prototypes,
    mode: str,
    count: int,
    seed: int = 0,
) -> list[int]:
    """Class ids closest to / farthest from the test prototypes, or random."""
    if mode not in ("random", "closest", "farthest"):
        raise ValueError(f"unknown selection mode {mode!r}")
    if count > len(pool_stats):
        raise ValueError(f"count {count} exceeds pool of {len(pool_stats)} classes")
    if mode == "random":
        ids = sorted(s.class_id for s in pool_stats)
        pick = rng_for(seed, "select-random").choice(len(ids), size=count, replace=False)
        return [ids[i] for i in pick]
    dist = _distances(pool_stats, test_prototypes)
    sign = 1.0 if mode == "closest" else -1.0
    ranked = sorted(dist, key=lambda cid: (sign * dist[cid], cid))
    return ranked[:count]


def budget_sample(
    ds: EmbeddingDataset, class_ids: Sequence[int], budget: int, seed: int = 0
) -> dict[int, np.ndarray]:
    """Keep map with exactly floor(budget/C) records per chosen class.

    The remainder budget - m*C is discarded (logged), keeping classes
    exactly balanced.
    """
    class_ids = list(class_ids)
    if not class_ids:
        raise ValueError("no classes selected")
    m = budget // len(class_ids)
    if m < 1:
        raise ValueError(f"budget {budget} gives zero images for {len(class_ids)} classes")
    keep: dict[int, np.ndarray] = {}
    for cid in sorted(class_ids):
        mem = ds.members_of(cid)
        if mem.shape[0] < m:
            raise ValueError(f"class {cid} has {mem.shape[0]} images, needs {m}")
        pick = rng_for(seed, "budget", cid).choice(mem.shape[0], size=m, replace=False)
        keep[cid] = np.sort(mem[pick])
    remainder = budget - m * len(class_ids)
    if remainder:
        logger.info("budget remainder: %d of %d images unused", remainder, budget)
    return keep


def bin_by_metric(pool_stats: Sequence[ClassStats], metric: str) -> list[list[int]]:
    """Ten contiguous bins of class ids, ascending in the metric (ties by id)."""
    if metric not in ("diversity", "difficulty"):
        raise ValueError(f"metric must be diversity or difficulty, got {metric!r}")
    if len(pool_stats) < BIN_COUNT:
        raise ValueError(f"binning needs >= {BIN_COUNT} classes, got {len(pool_stats)}")
    values = {}
    for s in pool_stats:
        v = getattr(s, metric)
        if v is None:
            raise ValueError(f"class {s.class_id} has no {metric} value")
        values[s.class_id] = v
    ranked = sorted(values, key=lambda cid: (values[cid], cid))
    return [list(chunk) for chunk in np.array_split(np.asarray(ranked), BIN_COUNT)]


def distance_filtered_sample(
    bin_class_ids: Sequence[int],
    pool_stats: Sequence[ClassStats],
    test_prototypes,
    count: int,
    band: tuple[float, float] = (0.4, 0.6),
    seed: int = 0,
) -> list[int]:
    """Sample from one bin, restricted to a global distance-to-test band.

    The band is a quantile range of the distance distribution over the whole
    pool, so samples from different bins have comparable test distance.
    """
    q_lo, q_hi = band
    if not 0.0 <= q_lo < q_hi <= 1.0:
        raise ValueError(f"band must satisfy 0 <= lo < hi <= 1, got {band}")
    dist = _distances(pool_stats, test_prototypes)
    pooled = np.asarray(sorted(dist.values()))
    d_lo, d_hi = np.quantile(pooled, [q_lo, q_hi])
    eligible = sorted(cid for cid in bin_class_ids if d_lo <= dist[cid] <= d_hi)
    if len(eligible) < count:
        raise ValueError(
            f"distance band {band} leaves {len(eligible)} of {len(bin_class_ids)} "
            f"bin classes, need {count}"
        )
    pick = rng_for(seed, "select-bin").choice(len(eligible), size=count, replace=False)
    return [eligible[i] for i in pick]
