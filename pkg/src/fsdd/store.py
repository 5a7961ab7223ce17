"""Labeled embedding datasets: on-disk format, validation, subsetting, relabeling.

A dataset directory holds:

    manifest.json   {"format_version": 1, "dim": int, "num_records": int,
                     "dtype": "f32le",
                     "classes": [{"id": int, "name": str, "count": int}, ...]}
    embeddings.bin  num_records x dim float32 little-endian, row-major
    labels.bin      num_records uint32 little-endian (class id per record)
    ids.txt         optional, one source identifier per record

Record ids are positional: record i is row i of the blobs. Subsetting
re-densifies them. A relabel directory reuses the labels.bin layout next to
a relabel.json carrying the new class table and provenance.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

FORMAT_VERSION = 1
MANIFEST_FILE = "manifest.json"
EMBEDDINGS_FILE = "embeddings.bin"
LABELS_FILE = "labels.bin"
IDS_FILE = "ids.txt"
RELABEL_FILE = "relabel.json"


class DatasetError(ValueError):
    """A dataset directory or in-memory dataset violates the format contract."""


@dataclass(frozen=True)
class ClassInfo:
    id: int
    name: str
    count: int


@dataclass(frozen=True)
class EmbeddingDataset:
    """Immutable collection of fixed-dimension vectors with integer class labels.

    ``vectors`` is (n, dim); ``class_ids`` is (n,). Arrays are frozen on
    construction, so instances are safe to share across workers.
    """

    dim: int
    vectors: np.ndarray
    class_ids: np.ndarray
    classes: tuple[ClassInfo, ...]
    ids: tuple[str, ...] | None = None

    def __post_init__(self):
        vectors = np.asarray(self.vectors)
        if vectors.dtype not in (np.float32, np.float64):
            vectors = vectors.astype(np.float32)
        class_ids = np.asarray(self.class_ids, dtype=np.int64)
        object.__setattr__(self, "vectors", vectors)
        object.__setattr__(self, "class_ids", class_ids)
        object.__setattr__(self, "classes", tuple(sorted(self.classes, key=lambda c: c.id)))
        if self.ids is not None:
            object.__setattr__(self, "ids", tuple(self.ids))
        self._validate()
        self.vectors.setflags(write=False)
        self.class_ids.setflags(write=False)

    def _validate(self):
        if self.dim <= 0:
            raise DatasetError(f"dim must be positive, got {self.dim}")
        if self.vectors.ndim != 2 or self.vectors.shape[1] != self.dim:
            raise DatasetError(
                f"vectors must have shape (n, {self.dim}), got {self.vectors.shape}"
            )
        n = self.vectors.shape[0]
        if self.class_ids.shape != (n,):
            raise DatasetError(
                f"labels length {self.class_ids.shape[0]} does not match {n} records"
            )
        finite = np.isfinite(self.vectors).all(axis=1)
        if not finite.all():
            bad = int(np.flatnonzero(~finite)[0])
            raise DatasetError(f"non-finite value in embedding of record {bad}")
        table_ids = [c.id for c in self.classes]
        if len(set(table_ids)) != len(table_ids):
            raise DatasetError("duplicate class id in class table")
        counts = {c.id: c.count for c in self.classes}
        present, present_counts = np.unique(self.class_ids, return_counts=True)
        actual = dict(zip(present.tolist(), present_counts.tolist()))
        unknown = set(actual) - set(counts)
        if unknown:
            raise DatasetError(f"record labeled with unknown class id {min(unknown)}")
        for cid, cnt in counts.items():
            if cnt != actual.get(cid, 0):
                raise DatasetError(
                    f"class {cid}: table count {cnt} != actual count {actual.get(cid, 0)}"
                )
        if self.ids is not None and len(self.ids) != n:
            raise DatasetError(f"ids.txt has {len(self.ids)} lines for {n} records")

    @property
    def n(self) -> int:
        return self.vectors.shape[0]

    @property
    def class_id_list(self) -> list[int]:
        return [c.id for c in self.classes]

    @cached_property
    def _members(self) -> dict[int, np.ndarray]:
        out = {c.id: np.empty(0, dtype=np.int64) for c in self.classes}
        order = np.argsort(self.class_ids, kind="stable")
        present, starts = np.unique(self.class_ids[order], return_index=True)
        for i, cid in enumerate(present.tolist()):
            end = starts[i + 1] if i + 1 < len(starts) else self.n
            out[cid] = np.sort(order[starts[i] : end])
        return out

    def members_of(self, class_id: int) -> np.ndarray:
        """Record ids of one class, in ascending (record) order."""
        try:
            return self._members[class_id]
        except KeyError:
            raise DatasetError(f"unknown class id {class_id}") from None

    def class_vectors(self, class_id: int) -> np.ndarray:
        return self.vectors[self.members_of(class_id)]


@dataclass(frozen=True)
class RelabelMap:
    """Total reassignment of records to new class ids.

    ``new_class_of[record_id]`` gives the new class; ``new_classes`` is the
    class table of the relabeled dataset; ``provenance`` records the method
    ("split", "group" or "kmeans") and its parameters.
    """

    new_class_of: np.ndarray
    new_classes: tuple[ClassInfo, ...]
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        arr = np.asarray(self.new_class_of, dtype=np.int64)
        object.__setattr__(self, "new_class_of", arr)
        object.__setattr__(self, "new_classes", tuple(self.new_classes))
        counts = {c.id: c.count for c in self.new_classes}
        actual: dict[int, int] = {}
        for cid in arr.tolist():
            actual[cid] = actual.get(cid, 0) + 1
        if set(actual) - set(counts):
            raise DatasetError(f"mapping targets unknown class ids {sorted(set(actual) - set(counts))}")
        for cid, cnt in counts.items():
            if actual.get(cid, 0) != cnt:
                raise DatasetError(
                    f"relabel class {cid}: table count {cnt} != mapped count {actual.get(cid, 0)}"
                )
        self.new_class_of.setflags(write=False)

    @property
    def n(self) -> int:
        return self.new_class_of.shape[0]


def _require_file(path: Path) -> Path:
    if not path.is_file():
        raise DatasetError(f"missing file: {path}")
    return path


def _parse_class_table(raw) -> tuple[ClassInfo, ...]:
    classes = []
    for entry in raw:
        classes.append(ClassInfo(id=int(entry["id"]), name=str(entry["name"]), count=int(entry["count"])))
    return tuple(classes)


def _class_table_json(classes: Iterable[ClassInfo]) -> list[dict]:
    return [{"id": c.id, "name": c.name, "count": c.count} for c in sorted(classes, key=lambda c: c.id)]


def load_dataset(path: str | Path) -> EmbeddingDataset:
    """Load and fully validate a dataset directory."""
    path = Path(path)
    if not path.is_dir():
        raise DatasetError(f"not a dataset directory: {path}")
    manifest_path = _require_file(path / MANIFEST_FILE)
    with open(manifest_path) as f:
        manifest = json.load(f)
    version = manifest.get("format_version")
    if version != FORMAT_VERSION:
        raise DatasetError(f"unsupported format_version {version!r}")
    if manifest.get("dtype") != "f32le":
        raise DatasetError(f"unsupported dtype {manifest.get('dtype')!r}")
    dim = int(manifest["dim"])
    num_records = int(manifest["num_records"])
    if dim <= 0 or num_records < 0:
        raise DatasetError(f"bad manifest: dim={dim} num_records={num_records}")

    emb_path = _require_file(path / EMBEDDINGS_FILE)
    lab_path = _require_file(path / LABELS_FILE)
    expected_emb = num_records * dim * 4
    expected_lab = num_records * 4
    if emb_path.stat().st_size != expected_emb:
        raise DatasetError(
            f"{EMBEDDINGS_FILE} is {emb_path.stat().st_size} bytes, expected {expected_emb}"
        )
    if lab_path.stat().st_size != expected_lab:
        raise DatasetError(
            f"{LABELS_FILE} is {lab_path.stat().st_size} bytes, expected {expected_lab}"
        )
    vectors = np.fromfile(emb_path, dtype="<f4").reshape(num_records, dim)
    labels = np.fromfile(lab_path, dtype="<u4").astype(np.int64)

    ids = None
    ids_path = path / IDS_FILE
    if ids_path.is_file():
        ids = tuple(ids_path.read_text().splitlines())

    classes = _parse_class_table(manifest.get("classes", []))
    return EmbeddingDataset(dim=dim, vectors=vectors, class_ids=labels, classes=classes, ids=ids)


def save_dataset(ds: EmbeddingDataset, path: str | Path) -> None:
    """Write a dataset directory. Round-trips bit-exactly for float32 vectors."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    manifest = {
        "format_version": FORMAT_VERSION,
        "dim": ds.dim,
        "num_records": ds.n,
        "dtype": "f32le",
        "classes": _class_table_json(ds.classes),
    }
    with open(path / MANIFEST_FILE, "w") as f:
        json.dump(manifest, f, indent=1, sort_keys=True)
        f.write("\n")
    ds.vectors.astype("<f4").tofile(path / EMBEDDINGS_FILE)
    ds.class_ids.astype("<u4").tofile(path / LABELS_FILE)
    if ds.ids is not None:
        (path / IDS_FILE).write_text("".join(line + "\n" for line in ds.ids))


def subset(ds: EmbeddingDataset, keep: Mapping[int, Iterable[int]]) -> EmbeddingDataset:
    """New dataset with exactly the kept records, re-densified in original order.

    ``keep`` maps class id -> record ids of that class. Classes left with
    zero kept records are dropped from the table.
    """
    names = {c.id: c.name for c in ds.classes}
    mask = np.zeros(ds.n, dtype=bool)
    for cid, rids in keep.items():
        if cid not in names:
            raise DatasetError(f"unknown class id {cid} in keep map")
        rids = np.asarray(sorted(set(int(r) for r in rids)), dtype=np.int64)
        if rids.size == 0:
            continue
        if rids[0] < 0 or rids[-1] >= ds.n:
            raise DatasetError(f"record id out of range for class {cid}")
        wrong = rids[ds.class_ids[rids] != cid]
        if wrong.size:
            raise DatasetError(
                f"record {int(wrong[0])} listed under class {cid} but belongs to "
                f"class {int(ds.class_ids[wrong[0]])}"
            )
        mask[rids] = True
    kept = np.flatnonzero(mask)
    new_labels = ds.class_ids[kept]
    present, counts = np.unique(new_labels, return_counts=True)
    classes = tuple(
        ClassInfo(id=int(cid), name=names[int(cid)], count=int(cnt))
        for cid, cnt in zip(present, counts)
    )
    new_ids = tuple(ds.ids[i] for i in kept) if ds.ids is not None else None
    return EmbeddingDataset(
        dim=ds.dim, vectors=ds.vectors[kept], class_ids=new_labels, classes=classes, ids=new_ids
    )


def keep_all(ds: EmbeddingDataset) -> dict[int, np.ndarray]:
    """Keep map selecting every record (identity subset)."""
    return {c.id: ds.members_of(c.id) for c in ds.classes}


def apply_relabel(ds: EmbeddingDataset, rmap: RelabelMap) -> EmbeddingDataset:
    """Replace class ids with the mapped ones; vectors and record order unchanged."""
    if rmap.n != ds.n:
        raise DatasetError(f"relabel map covers {rmap.n} records, dataset has {ds.n}")
    return EmbeddingDataset(
        dim=ds.dim,
        vectors=ds.vectors,
        class_ids=rmap.new_class_of,
        classes=rmap.new_classes,
        ids=ds.ids,
    )


def save_relabel(rmap: RelabelMap, path: str | Path) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    rmap.new_class_of.astype("<u4").tofile(path / LABELS_FILE)
    meta = {
        "format_version": FORMAT_VERSION,
        "num_records": rmap.n,
        "classes": _class_table_json(rmap.new_classes),
        "provenance": rmap.provenance,
    }
    with open(path / RELABEL_FILE, "w") as f:
        json.dump(meta, f, indent=1, sort_keys=True)
        f.write("\n")


def load_relabel(path: str | Path) -> RelabelMap:
    path = Path(path)
    meta_path = _require_file(path / RELABEL_FILE)
    with open(meta_path) as f:
        meta = json.load(f)
    if meta.get("format_version") != FORMAT_VERSION:
        raise DatasetError(f"unsupported format_version {meta.get('format_version')!r}")
    num_records = int(meta["num_records"])
    lab_path = _require_file(path / LABELS_FILE)
    if lab_path.stat().st_size != num_records * 4:
        raise DatasetError(
            f"{LABELS_FILE} is {lab_path.stat().st_size} bytes, expected {num_records * 4}"
        )
    labels = np.fromfile(lab_path, dtype="<u4").astype(np.int64)
    return RelabelMap(
        new_class_of=labels,
        new_classes=_parse_class_table(meta.get("classes", [])),
        provenance=dict(meta.get("provenance", {})),
    )
