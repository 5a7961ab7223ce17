import numpy as np
import pytest

from fsdd.store import ClassInfo, EmbeddingDataset


def make_ds(vectors, class_ids, names=None, dtype=np.float32, ids=None) -> EmbeddingDataset:
    """Dataset from raw arrays; class table derived from the labels."""
    vectors = np.asarray(vectors, dtype=dtype)
    class_ids = np.asarray(class_ids, dtype=np.int64)
    present, counts = np.unique(class_ids, return_counts=True)
    classes = tuple(
        ClassInfo(
            id=int(c),
            name=names[int(c)] if names else f"class_{int(c)}",
            count=int(n),
        )
        for c, n in zip(present, counts)
    )
    return EmbeddingDataset(
        dim=vectors.shape[1], vectors=vectors, class_ids=class_ids, classes=classes, ids=ids
    )


def random_ds(rng, n_classes=4, per_class=10, dim=6, dtype=np.float64) -> EmbeddingDataset:
    vectors = rng.normal(size=(n_classes * per_class, dim))
    labels = np.repeat(np.arange(n_classes), per_class)
    return make_ds(vectors, labels, dtype=dtype)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
