"""Small trainable embedders optimized with a scaled-cosine classifier head.

The embedder maps stored vectors to a new space whose l2-normalized outputs
feed few-shot evaluation. Training jointly optimizes the embedder and one
weight vector per class with cross-entropy over scaled cosine logits,
mini-batch SGD with momentum and weight decay, and a balanced class
sampler. All gradients are computed analytically, including the
normalization Jacobians, in float64.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .rng import rng_for
from .store import EmbeddingDataset

MLP_HIDDEN_DIM = 128
DEFAULT_OUT_CAP = 64

EMBEDDER_KINDS = ("identity", "linear", "mlp1")


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch_size: int = 64
    learning_rate: float = 0.05
    momentum: float = 0.9
    weight_decay: float = 5e-4
    cosine_scale: float = 10.0
    seed: int = 0
    lr_decay_epochs: tuple[int, ...] = ()
    lr_decay_factor: float = 10.0
    warmup_steps: int = 0

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size <= 0:
            raise ValueError("epochs must be >= 0 and batch_size positive")
        if self.learning_rate <= 0 or self.cosine_scale <= 0 or self.lr_decay_factor <= 0:
            raise ValueError("learning_rate, cosine_scale and lr_decay_factor must be positive")
        if self.momentum < 0 or self.weight_decay < 0 or self.warmup_steps < 0:
            raise ValueError("momentum, weight_decay and warmup_steps must be non-negative")


@dataclass(frozen=True)
class Embedder:
    kind: str
    in_dim: int
    out_dim: int
    weights: dict[str, np.ndarray] = field(default_factory=dict)

    def raw_forward(self, x: np.ndarray) -> np.ndarray:
        """Embedder output before l2 normalization, (n, out_dim) float64."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape[1] != self.in_dim:
            raise ValueError(f"input dim {x.shape[1]} != embedder in_dim {self.in_dim}")
        if self.kind == "identity":
            return x
        if self.kind == "linear":
            return x @ self.weights["W"].T
        h = np.maximum(0.0, x @ self.weights["W1"].T + self.weights["b1"])
        return h @ self.weights["W2"].T


def init_embedder(kind: str, in_dim: int, out_dim: int | None = None, seed: int = 0) -> Embedder:
    """Seeded uniform init scaled by 1/sqrt(fan_in); identity has no weights."""
    if kind not in EMBEDDER_KINDS:
        raise ValueError(f"unknown embedder kind {kind!r}")
    if kind == "identity":
        return Embedder(kind="identity", in_dim=in_dim, out_dim=in_dim)
    if out_dim is None:
        out_dim = min(in_dim, DEFAULT_OUT_CAP)
    rng = rng_for(seed, "embedder-init", kind)
    if kind == "linear":
        w = rng.uniform(-1.0, 1.0, size=(out_dim, in_dim)) / np.sqrt(in_dim)
        return Embedder(kind="linear", in_dim=in_dim, out_dim=out_dim, weights={"W": w})
    w1 = rng.uniform(-1.0, 1.0, size=(MLP_HIDDEN_DIM, in_dim)) / np.sqrt(in_dim)
    b1 = np.zeros(MLP_HIDDEN_DIM)
    w2 = rng.uniform(-1.0, 1.0, size=(out_dim, MLP_HIDDEN_DIM)) / np.sqrt(MLP_HIDDEN_DIM)
    return Embedder(
        kind="mlp1", in_dim=in_dim, out_dim=out_dim, weights={"W1": w1, "b1": b1, "W2": w2}
    )


def _normalize_with_grad_context(u: np.ndarray, what: str):
    norms = np.linalg.norm(u, axis=1)
    if np.any(norms == 0.0):
        raise TrainingError(f"zero-norm {what} at row {int(np.flatnonzero(norms == 0)[0])}")
    return u / norms[:, None], norms


def loss_and_grad(
    embedder: Embedder,
    class_weights: np.ndarray,
    x: np.ndarray,
    y: np.ndarray,
    scale: float,
):
    """Cross-entropy over scaled cosine logits and its exact gradients.

    Returns (loss, grads) where grads holds "class_weights" plus one entry
    per embedder weight array. The loss is the batch mean.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if x.shape[0] == 0:
        raise ValueError("empty batch")
    b = x.shape[0]
    w = np.asarray(class_weights, dtype=np.float64)

    u = embedder.raw_forward(x)
    uh, unorm = _normalize_with_grad_context(u, "embedding")
    wh, wnorm = _normalize_with_grad_context(w, "class weight")

    logits = scale * (uh @ wh.T)
    zmax = logits.max(axis=1, keepdims=True)
    lse = zmax[:, 0] + np.log(np.exp(logits - zmax).sum(axis=1))
    loss = float(np.mean(lse - logits[np.arange(b), y]))
    if not np.isfinite(loss):
        raise TrainingError("non-finite loss")

    g = np.exp(logits - lse[:, None])  # softmax probabilities
    g[np.arange(b), y] -= 1.0
    g /= b

    d_uh = scale * (g @ wh)
    d_wh = scale * (g.T @ uh)
    # through u/||u||: (d_uh - (d_uh . uh) uh) / ||u||
    d_u = (d_uh - np.sum(d_uh * uh, axis=1, keepdims=True) * uh) / unorm[:, None]
    d_w = (d_wh - np.sum(d_wh * wh, axis=1, keepdims=True) * wh) / wnorm[:, None]

    grads: dict[str, np.ndarray] = {"class_weights": d_w}
    if embedder.kind == "linear":
        grads["W"] = d_u.T @ x
    elif embedder.kind == "mlp1":
        w1, b1, w2 = embedder.weights["W1"], embedder.weights["b1"], embedder.weights["W2"]
        h_pre = x @ w1.T + b1
        h = np.maximum(0.0, h_pre)
        grads["W2"] = d_u.T @ h
        d_h = (d_u @ w2) * (h_pre > 0.0)
        grads["W1"] = d_h.T @ x
        grads["b1"] = d_h.sum(axis=0)
    return loss, grads


def balanced_epoch_order(
    members: list[np.ndarray], n_total: int, seed: int, epoch: int
) -> np.ndarray:
    """Record ids for one epoch with per-class counts differing by at most 1.

    Classes draw uniformly from their own members, without replacement where
    the quota allows; the concatenated draws are shuffled.
    """
    c = len(members)
    rng = rng_for(seed, "epoch", epoch)
    base, rem = divmod(n_total, c)
    counts = np.full(c, base, dtype=np.int64)
    counts[rng.permutation(c)[:rem]] += 1
    draws = []
    for mem, cnt in zip(members, counts):
        if cnt == 0:
            continue
        take = rng.choice(mem.shape[0], size=cnt, replace=mem.shape[0] < cnt)
        draws.append(mem[take])
    order = np.concatenate(draws)
    rng.shuffle(order)
    return order


def fit(base: EmbeddingDataset, cfg: TrainConfig, kind: str = "linear", out_dim: int | None = None):
    """Train embedder and cosine head; returns (embedder, class_weights, info).

    ``class_weights`` rows follow ``info["class_ids"]`` (ascending class-id
    order). ``info["loss"]`` logs the loss of every step.
    """
    if len(base.classes) < 2:
        raise ValueError("training needs at least two classes")
    if cfg.batch_size > base.n:
        raise ValueError(f"batch_size {cfg.batch_size} exceeds dataset size {base.n}")

    class_ids = base.class_id_list
    members = [base.members_of(cid) for cid in class_ids]
    label_of = np.empty(base.n, dtype=np.int64)
    for li, mem in enumerate(members):
        label_of[mem] = li

    embedder = init_embedder(kind, base.dim, out_dim=out_dim, seed=cfg.seed)
    params: dict[str, np.ndarray] = {
        k: v.astype(np.float64).copy() for k, v in embedder.weights.items()
    }
    x_all = base.vectors.astype(np.float64)

    def current():
        return replace(embedder, weights={k: params[k] for k in embedder.weights})

    # head init: per-class prototypes of the seeded initial embeddings
    u0 = current().raw_forward(x_all)
    u0h, _ = _normalize_with_grad_context(u0, "embedding")
    class_w = np.stack([u0h[mem].mean(axis=0) for mem in members])
    params["class_weights"] = class_w

    velocity = {k: np.zeros_like(v) for k, v in params.items()}
    losses: list[float] = []
    step = 0
    for epoch in range(cfg.epochs):
        decay = sum(1 for de in cfg.lr_decay_epochs if epoch >= de)
        lr_epoch = cfg.learning_rate / (cfg.lr_decay_factor**decay)
        order = balanced_epoch_order(members, base.n, cfg.seed, epoch)
        for start in range(0, order.shape[0], cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            lr = lr_epoch
            if cfg.warmup_steps > 0:
                lr *= min(1.0, (step + 1) / cfg.warmup_steps)
            try:
                loss, grads = loss_and_grad(
                    current(), params["class_weights"], x_all[batch], label_of[batch], cfg.cosine_scale
                )
            except TrainingError as err:
                raise TrainingError(f"{err} (step {step})") from None
            losses.append(loss)
            for key, grad in grads.items():
                g = grad + cfg.weight_decay * params[key]
                velocity[key] = cfg.momentum * velocity[key] + g
                params[key] -= lr * velocity[key]
            step += 1

    info = {"class_ids": class_ids, "loss": losses}
    return current(), params["class_weights"], info


def train_embedder(
    base: EmbeddingDataset, cfg: TrainConfig, kind: str = "linear", out_dim: int | None = None
) -> Embedder:
    """Train on the base dataset and return the embedder (head discarded)."""
    if kind == "identity":
        if len(base.classes) < 2:
            raise ValueError("training needs at least two classes")
        return init_embedder("identity", base.dim)
    embedder, _, _ = fit(base, cfg, kind, out_dim=out_dim)
    return embedder


def head_accuracy(
    embedder: Embedder, class_weights: np.ndarray, class_ids: list[int], ds: EmbeddingDataset
) -> float:
    """Accuracy of the trained cosine head on a labeled dataset."""
    u = embedder.raw_forward(ds.vectors.astype(np.float64))
    uh, _ = _normalize_with_grad_context(u, "embedding")
    wh, _ = _normalize_with_grad_context(np.asarray(class_weights, dtype=np.float64), "class weight")
    pred = np.asarray(class_ids)[np.argmax(uh @ wh.T, axis=1)]
    return float(np.mean(pred == ds.class_ids))


def embed(embedder: Embedder, ds: EmbeddingDataset) -> EmbeddingDataset:
    """Map a dataset through the embedder; outputs are l2-normalized."""
    if ds.dim != embedder.in_dim:
        raise ValueError(f"dataset dim {ds.dim} != embedder in_dim {embedder.in_dim}")
    u = embedder.raw_forward(ds.vectors.astype(np.float64))
    norms = np.linalg.norm(u, axis=1)
    if np.any(norms == 0.0):
        bad = int(np.flatnonzero(norms == 0.0)[0])
        raise ValueError(f"record {bad} maps to a zero vector")
    out = (u / norms[:, None]).astype(np.float32)
    return EmbeddingDataset(
        dim=embedder.out_dim, vectors=out, class_ids=ds.class_ids, classes=ds.classes, ids=ds.ids
    )


MODEL_FILE_VERSION = 1


def save_model(embedder: Embedder, path: str | Path) -> None:
    """JSON manifest next to a float32 little-endian weight blob."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    blob_name = path.stem + ".bin"
    tensors = []
    offset = 0
    chunks = []
    for name in sorted(embedder.weights):
        arr = embedder.weights[name].astype("<f4")
        tensors.append({"name": name, "shape": list(arr.shape), "offset": offset})
        chunks.append(arr.tobytes(order="C"))
        offset += arr.nbytes
    manifest = {
        "format_version": MODEL_FILE_VERSION,
        "kind": embedder.kind,
        "in_dim": embedder.in_dim,
        "out_dim": embedder.out_dim,
        "dtype": "f32le",
        "weights_file": blob_name,
        "tensors": tensors,
    }
    with open(path, "w") as f:
        json.dump(manifest, f, indent=1, sort_keys=True)
        f.write("\n")
    (path.parent / blob_name).write_bytes(b"".join(chunks))


def load_model(path: str | Path) -> Embedder:
    path = Path(path)
    with open(path) as f:
        manifest = json.load(f)
    if manifest.get("format_version") != MODEL_FILE_VERSION:
        raise ValueError(f"unsupported model format_version {manifest.get('format_version')!r}")
    blob = (path.parent / manifest["weights_file"]).read_bytes()
    weights = {}
    for t in manifest["tensors"]:
        shape = tuple(t["shape"])
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(blob, dtype="<f4", count=count, offset=t["offset"])
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"non-finite weight in tensor {t['name']!r}")
        weights[t["name"]] = arr.reshape(shape).astype(np.float64)
    return Embedder(
        kind=manifest["kind"],
        in_dim=int(manifest["in_dim"]),
        out_dim=int(manifest["out_dim"]),
        weights=weights,
    )
