import math

import numpy as np
import pytest

from fsdd.relabel import bisection_split, greedy_group, kmeans_relabel, top_principal_component
from fsdd.store import apply_relabel

from conftest import make_ds, random_ds


def leaves_of(ds, rmap):
    """new class id -> sorted record ids."""
    out = {}
    for c in rmap.new_classes:
        out[c.id] = np.flatnonzero(rmap.new_class_of == c.id)
    return out


class TestPrincipalComponent:
    def test_dominant_axis(self, rng):
        x = np.array([[0.0, 0.0], [0.0, 1.0], [10.0, 0.0], [10.0, 1.0]])
        v = top_principal_component(x)
        assert abs(v[0]) > 0.99 and v[0] > 0  # canonical sign

    def test_zero_variance_returns_none(self):
        assert top_principal_component(np.ones((4, 3))) is None

    def test_matches_eigensolver(self, rng):
        x = rng.normal(size=(30, 5)) @ np.diag([3.0, 2.0, 1.0, 0.5, 0.1])
        v = top_principal_component(x)
        c = x - x.mean(axis=0)
        w, vecs = np.linalg.eigh(c.T @ c)
        top = vecs[:, -1]
        assert abs(abs(v @ top) - 1.0) < 1e-8


class TestBisectionSplit:
    def test_symmetric_median_split(self):
        # 1-D structure with projections -2, -1, 1, 2
        ds = make_ds([[-2.0], [-1.0], [1.0], [2.0]], [0, 0, 0, 0])
        rmap = bisection_split(ds, 2)
        parts = leaves_of(ds, rmap)
        assert sorted(tuple(p) for p in parts.values()) == [(0, 1), (2, 3)]

    def test_dominant_axis_construction(self):
        ds = make_ds([[0.0, 0.0], [0.0, 1.0], [10.0, 0.0], [10.0, 1.0]], [0] * 4)
        rmap = bisection_split(ds, 2)
        parts = leaves_of(ds, rmap)
        assert sorted(tuple(p) for p in parts.values()) == [(0, 1), (2, 3)]

    def test_odd_count_first_half_larger(self):
        # 5 collinear points: left gets ceil(5/2) = 3 lowest
        ds = make_ds([[float(x)] for x in (1, 2, 3, 4, 5)], [0] * 5)
        rmap = bisection_split(ds, 2)
        parts = leaves_of(ds, rmap)
        assert tuple(parts[0]) == (0, 1, 2) and tuple(parts[1]) == (3, 4)

    def test_1d_matches_sort_median_oracle(self, rng):
        for _ in range(20):
            m = int(rng.integers(2, 30))
            vals = rng.normal(size=m)
            ds = make_ds(vals[:, None], np.zeros(m, int), dtype=np.float64)
            rmap = bisection_split(ds, 2)
            parts = leaves_of(ds, rmap)
            order = np.lexsort((np.arange(m), vals))
            left = set(order[: (m + 1) // 2])
            produced_left = {rid for rid in parts[0]}
            produced_right = {rid for rid in parts[1]}
            assert produced_left == left or produced_right == left

    def test_ratio4_and_8_partition_and_balance(self, rng):
        ds = random_ds(rng, n_classes=3, per_class=21, dim=5)
        for ratio in (4, 8):
            rmap = bisection_split(ds, ratio)
            assert len(rmap.new_classes) == 3 * ratio
            parts = leaves_of(ds, rmap)
            for ci in range(3):
                members = np.concatenate([parts[ci * ratio + li] for li in range(ratio)])
                assert sorted(members) == sorted(ds.members_of(ci))
                sizes = [len(parts[ci * ratio + li]) for li in range(ratio)]
                # siblings at the deepest level differ by at most 1
                for a in range(0, ratio, 2):
                    assert abs(sizes[a] - sizes[a + 1]) <= 1

    def test_class_smaller_than_ratio_rejected(self, rng):
        ds = random_ds(rng, n_classes=2, per_class=3)
        with pytest.raises(ValueError, match="fewer than ratio"):
            bisection_split(ds, 4)

    def test_non_power_of_two_rejected(self, rng):
        ds = random_ds(rng)
        with pytest.raises(ValueError):
            bisection_split(ds, 3)

    def test_zero_variance_class_warns_and_splits_by_record_order(self):
        ds = make_ds([[1.0, 1.0]] * 4, [0] * 4)
        with pytest.warns(RuntimeWarning, match="zero variance"):
            rmap = bisection_split(ds, 2)
        parts = leaves_of(ds, rmap)
        assert tuple(parts[0]) == (0, 1) and tuple(parts[1]) == (2, 3)

    def test_preserves_vector_multiset(self, rng):
        ds = random_ds(rng, n_classes=2, per_class=8, dtype=np.float32)
        out = apply_relabel(ds, bisection_split(ds, 2))
        assert np.array_equal(out.vectors, ds.vectors)


def oracle_greedy_pairing(prototypes, passes):
    """Exhaustive greedy grouping: rescan all pairs per merge, pure python."""

    def cos(a, b):
        na = math.sqrt(math.fsum(x * x for x in a))
        nb = math.sqrt(math.fsum(x * x for x in b))
        return math.fsum(x * y for x, y in zip(a, b)) / (na * nb)

    level = [([i], list(p)) for i, p in enumerate(prototypes)]
    history = []
    for _ in range(passes):
        if len(level) < 2:
            break
        unprocessed = list(range(len(level)))
        merged = []
        while len(unprocessed) >= 2:
            best = None
            for ai in range(len(unprocessed)):
                for bi in range(ai + 1, len(unprocessed)):
                    i, j = unprocessed[ai], unprocessed[bi]
                    s = cos(level[i][1], level[j][1])
                    if best is None or s > best[0]:
                        best = (s, i, j)
            _, i, j = best
            history.append((i, j))
            members = level[i][0] + level[j][0]
            proto = [(a + b) / 2 for a, b in zip(level[i][1], level[j][1])]
            merged.append((members, proto))
            unprocessed.remove(i)
            unprocessed.remove(j)
        if unprocessed:
            merged.append(level[unprocessed[0]])
        level = merged
    groups = [tuple(sorted(m)) for m, _ in level]
    return sorted(groups), history


class TestGreedyGroup:
    def test_two_well_separated_pairs(self):
        b = np.array([0.995, 0.0999])
        b /= np.linalg.norm(b)
        d = np.array([0.0999, 0.995])
        d /= np.linalg.norm(d)
        vectors = np.stack([[1.0, 0.0], b, [0.0, 1.0], d])
        ds = make_ds(vectors, [0, 1, 2, 3], dtype=np.float64)
        rmap = greedy_group(ds, 0.5)
        groups = sorted(
            tuple(sorted(set(ds.class_ids[np.flatnonzero(rmap.new_class_of == c.id)].tolist())))
            for c in rmap.new_classes
        )
        assert groups == [(0, 1), (2, 3)]

    def test_three_classes_leftover_singleton(self):
        ds = make_ds([[1.0, 0.0], [0.9, 0.1], [0.0, 1.0]], [0, 1, 2], dtype=np.float64)
        rmap = greedy_group(ds, 0.5)
        sizes = sorted(c.count for c in rmap.new_classes)
        assert len(rmap.new_classes) == 2 and sizes == [1, 2]

    @pytest.mark.parametrize("ratio,passes", [(0.5, 1), (0.25, 2)])
    def test_matches_exhaustive_oracle(self, rng, ratio, passes):
        for _ in range(30):
            c = int(rng.integers(4, 12))
            protos = rng.normal(size=(c, 5))
            ds = make_ds(protos, np.arange(c), dtype=np.float64)
            rmap = greedy_group(ds, ratio)
            produced = sorted(
                tuple(sorted(set(ds.class_ids[np.flatnonzero(rmap.new_class_of == k.id)].tolist())))
                for k in rmap.new_classes
            )
            expected, _ = oracle_greedy_pairing(protos / np.linalg.norm(protos, axis=1, keepdims=True), passes)
            assert produced == expected

    def test_class_count_after_passes(self, rng):
        ds = random_ds(rng, n_classes=11, per_class=3)
        assert len(greedy_group(ds, 0.5).new_classes) == 6  # ceil(11/2)
        assert len(greedy_group(ds, 0.25).new_classes) == 3  # ceil(11/4)
        assert len(greedy_group(ds, 0.125).new_classes) == 2  # ceil(11/8)

    def test_bad_ratio_rejected(self, rng):
        ds = random_ds(rng)
        for ratio in (0.3, 1.0, 2.0):
            with pytest.raises(ValueError):
                greedy_group(ds, ratio)

    def test_single_class_rejected(self, rng):
        ds = random_ds(rng, n_classes=1)
        with pytest.raises(ValueError):
            greedy_group(ds, 0.5)

    def test_preserves_vector_multiset(self, rng):
        ds = random_ds(rng, n_classes=6, per_class=4, dtype=np.float32)
        out = apply_relabel(ds, greedy_group(ds, 0.5))
        assert np.array_equal(out.vectors, ds.vectors)


class TestKmeans:
    def test_k1_single_class(self, rng):
        ds = random_ds(rng, n_classes=2, per_class=5)
        rmap = kmeans_relabel(ds, 1, seed=0)
        assert len(rmap.new_classes) == 1 and rmap.new_classes[0].count == ds.n

    def test_recovers_separated_pairs(self):
        ds = make_ds(
            [[1.0, 0.01], [1.0, -0.01], [-0.01, 1.0], [0.01, 1.0]], [0, 0, 1, 1], dtype=np.float64
        )
        rmap = kmeans_relabel(ds, 2, seed=3)
        a = rmap.new_class_of
        assert a[0] == a[1] and a[2] == a[3] and a[0] != a[2]

    def test_objective_monotone_many_seeds(self, rng):
        for seed in range(10):
            ds = random_ds(np.random.default_rng(seed), n_classes=4, per_class=12, dim=4)
            rmap = kmeans_relabel(ds, 5, seed=seed)
            obj = rmap.provenance["objective"]
            assert all(a >= b - 1e-12 for a, b in zip(obj, obj[1:]))

    def test_deterministic_given_seed(self, rng):
        ds = random_ds(rng, n_classes=3, per_class=10)
        a = kmeans_relabel(ds, 4, seed=9)
        b = kmeans_relabel(ds, 4, seed=9)
        assert np.array_equal(a.new_class_of, b.new_class_of)

    def test_k_bounds(self, rng):
        ds = random_ds(rng, n_classes=2, per_class=3)
        with pytest.raises(ValueError):
            kmeans_relabel(ds, 0)
        with pytest.raises(ValueError):
            kmeans_relabel(ds, ds.n + 1)

    def test_no_empty_clusters(self, rng):
        ds = random_ds(rng, n_classes=2, per_class=10, dim=3)
        rmap = kmeans_relabel(ds, 7, seed=11)
        assert all(c.count >= 1 for c in rmap.new_classes)

    def test_preserves_vector_multiset(self, rng):
        ds = random_ds(rng, n_classes=3, per_class=6, dtype=np.float32)
        out = apply_relabel(ds, kmeans_relabel(ds, 4, seed=0))
        assert np.array_equal(out.vectors, ds.vectors)
