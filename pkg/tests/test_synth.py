import numpy as np
import pytest

from fsdd.stats import class_diversity, distance_to_test
from fsdd.stats import compute_class_stats, dataset_prototypes
from fsdd.store import save_dataset
from fsdd.synth import SynthError, SynthSpec, gen_base_novel, gen_hierarchical


def spec_with(**kw):
    base = dict(
        dim=8,
        n_super=4,
        classes_per_super=3,
        images_per_class=10,
        super_separation=1.0,
        intra_super_spread=0.1,
        within_class_noise=0.05,
        seed=0,
    )
    base.update(kw)
    return SynthSpec(**base)


class TestGenHierarchical:
    def test_shapes_and_ground_truth(self):
        ds, gt = gen_hierarchical(spec_with())
        assert ds.n == 4 * 3 * 10 and len(ds.classes) == 12
        assert sorted(gt) == list(range(12))
        assert sorted(set(gt.values())) == [0, 1, 2, 3]

    def test_zero_noise_gives_constant_classes(self):
        ds, _ = gen_hierarchical(spec_with(within_class_noise=0.0))
        for c in ds.classes:
            vecs = ds.class_vectors(c.id)
            assert np.all(vecs == vecs[0])
            assert class_diversity(vecs) == 0.0

    def test_single_class_degenerate(self):
        ds, gt = gen_hierarchical(spec_with(n_super=1, classes_per_super=1))
        assert len(ds.classes) == 1 and gt == {0: 0}

    def test_deterministic_byte_for_byte(self, tmp_path):
        a, _ = gen_hierarchical(spec_with(seed=9))
        b, _ = gen_hierarchical(spec_with(seed=9))
        save_dataset(a, tmp_path / "a")
        save_dataset(b, tmp_path / "b")
        for name in ("manifest.json", "embeddings.bin", "labels.bin"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_unsatisfiable_separation_reports_minimum(self):
        with pytest.raises(SynthError, match="best rejected"):
            gen_hierarchical(spec_with(dim=2, n_super=40, super_separation=1.9))

    def test_diversity_tracks_noise(self):
        # rank correlation across a noise sweep, averaged over seeds
        noises = [0.01, 0.02, 0.04, 0.06, 0.08]
        corrs = []
        for seed in range(5):
            means = []
            for noise in noises:
                ds, _ = gen_hierarchical(spec_with(within_class_noise=noise, seed=seed))
                means.append(np.mean([class_diversity(ds.class_vectors(c.id)) for c in ds.classes]))
            ranks = np.argsort(np.argsort(means))
            corrs.append(np.corrcoef(ranks, np.arange(len(noises)))[0, 1])
        assert np.mean(corrs) > 0.9

    def test_subspace_structure(self):
        spec = spec_with(dim=16, class_subspace_dim=2, classes_per_super=5, within_class_noise=0.0)
        ds, gt = gen_hierarchical(spec)
        # class centers of one super span (at most) a 2-dim affine subspace
        protos = np.stack([ds.class_vectors(c.id).mean(axis=0) for c in ds.classes if gt[c.id] == 0])
        centered = protos - protos.mean(axis=0)
        s = np.linalg.svd(centered, compute_uv=False)
        assert s[2] < 0.05 * s[0]


class TestGenBaseNovel:
    def test_near_mode_tags_and_distances(self):
        spec = spec_with(n_super=6, classes_per_super=4, images_per_class=12)
        split = gen_base_novel(spec, 0.34, "near", seed=4)
        assert set(split.base_tags.values()) == {"near", "far"}
        test_protos = dataset_prototypes(split.novel)
        stats = compute_class_stats(split.base, test_prototypes=test_protos)
        near = [s.dist_to_test for s in stats if split.base_tags[s.class_id] == "near"]
        far = [s.dist_to_test for s in stats if split.base_tags[s.class_id] == "far"]
        assert np.mean(near) < np.mean(far)

    def test_far_mode_excludes_novel_supers(self):
        spec = spec_with(n_super=6, classes_per_super=4)
        split = gen_base_novel(spec, 0.34, "far", seed=4)
        novel_supers = set(split.novel_supers)
        for cid in split.base.class_id_list:
            assert split.class_to_super[cid] not in novel_supers
        for cid in split.novel.class_id_list:
            assert split.class_to_super[cid] in novel_supers

    def test_base_and_novel_disjoint(self):
        split = gen_base_novel(spec_with(n_super=6), 0.34, "near", seed=1)
        assert not set(split.base.class_id_list) & set(split.novel.class_id_list)

    def test_insufficient_supers(self):
        with pytest.raises(SynthError, match="base supers"):
            gen_base_novel(spec_with(n_super=2), 0.9, "near", seed=0)

    def test_bad_fraction(self):
        with pytest.raises(SynthError):
            gen_base_novel(spec_with(), 0.0, "near", seed=0)

    def test_deterministic(self):
        a = gen_base_novel(spec_with(), 0.4, "near", seed=3)
        b = gen_base_novel(spec_with(), 0.4, "near", seed=3)
        assert np.array_equal(a.base.vectors, b.base.vectors)
        assert a.novel_supers == b.novel_supers


def test_spec_validation():
    with pytest.raises(SynthError):
        spec_with(intra_super_spread=2.0)  # separation not > spread
    with pytest.raises(SynthError):
        spec_with(within_class_noise=0.5)  # spread not > noise
    with pytest.raises(SynthError):
        spec_with(dim=0)
    with pytest.raises(SynthError):
        spec_with(class_subspace_dim=99)
