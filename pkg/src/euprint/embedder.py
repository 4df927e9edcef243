"""Convolutional embedding network over preprocessed trace matrices.

Implemented directly on numpy with hand-derived gradients so every weight is
reachable by finite-difference checking. Training runs in two phases: a
softmax classification head first, then semi-hard triplet loss on the same
trunk with the head removed. Inference maps a 32x32 matrix to a unit-norm
embedding; record embeddings average seven trace embeddings and renormalize.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path

import numpy as np

from .tracemodel import MATRIX_SIDE, FingerprintRecord, PreprocessedTrace, preprocess

NORM_EPS = 1e-12


class ShapeMismatch(ValueError):
    """Input matrix side length differs from what the weights were built for."""


class DimensionMismatch(ValueError):
    """Embedding vectors of unequal length."""


class NoValidTriplets(ValueError):
    """The batch admits no semi-hard triple; caller should resample."""


class InsufficientData(ValueError):
    """Training needs at least two devices with two traces each."""


class EmptyGallery(ValueError):
    """k-NN queries need at least one memorized embedding."""


class EmptyPopulation(ValueError):
    """The requested distance population has no pairs."""


class Activation(Enum):
    RELU = "relu"
    SIGMOID = "sigmoid"


@dataclass(frozen=True)
class NetworkSpec:
    conv_blocks: int = 2
    conv_filters: int = 16
    kernel_size: int = 4
    dropout_rate: float = 0.119510
    dense_width: int = 64
    embedding_dim: int = 32
    activation: Activation = Activation.RELU
    seed: int = 0

    def __post_init__(self) -> None:
        if self.conv_blocks < 1 or self.conv_filters < 1 or self.kernel_size < 1:
            raise ValueError("conv_blocks, conv_filters, kernel_size must be >= 1")
        if self.embedding_dim < 2:
            raise ValueError("embedding_dim must be >= 2")
        if not 0.0 <= self.dropout_rate <= 0.5:
            raise ValueError("dropout_rate must lie in [0, 0.5]")
        if self.dense_width < 1:
            raise ValueError("dense_width must be >= 1")


def preset_spec(name: str, seed: int = 0) -> NetworkSpec:
    """Named architectures: a small trainable "desk" net and the full-size one."""
    if name == "desk":
        return NetworkSpec(seed=seed)
    if name == "paper":
        return NetworkSpec(
            conv_blocks=3,
            conv_filters=128,
            embedding_dim=256,
            seed=seed,
        )
    raise ValueError(f"unknown preset {name!r}")


@dataclass(frozen=True)
class TripletConfig:
    """Phase-2 knobs; phase1_epochs covers the classification warm start."""

    margin: float = 0.2
    batch_size: int = 1024
    epochs: int = 30
    learning_rate: float = 0.05
    phase1_epochs: int = 20

    def __post_init__(self) -> None:
        if self.margin <= 0:
            raise ValueError("margin must be positive")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2")
        if self.epochs < 0 or self.phase1_epochs < 0:
            raise ValueError("epoch counts must be >= 0")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")


@dataclass
class EmbedderWeights:
    spec: NetworkSpec
    input_side: int
    conv: list[tuple[np.ndarray, np.ndarray]]
    dense1: tuple[np.ndarray, np.ndarray]
    dense2: tuple[np.ndarray, np.ndarray]

    def copy(self) -> "EmbedderWeights":
        return EmbedderWeights(
            spec=self.spec,
            input_side=self.input_side,
            conv=[(w.copy(), b.copy()) for w, b in self.conv],
            dense1=(self.dense1[0].copy(), self.dense1[1].copy()),
            dense2=(self.dense2[0].copy(), self.dense2[1].copy()),
        )

    def arrays(self) -> list[tuple[str, np.ndarray]]:
        """Named views in a fixed order; mutating them mutates the weights."""
        out = []
        for i, (w, b) in enumerate(self.conv):
            out.append((f"conv{i}.W", w))
            out.append((f"conv{i}.b", b))
        out.append(("dense1.W", self.dense1[0]))
        out.append(("dense1.b", self.dense1[1]))
        out.append(("dense2.W", self.dense2[0]))
        out.append(("dense2.b", self.dense2[1]))
        return out


def _plan_sides(spec: NetworkSpec, input_side: int) -> list[int]:
    """Spatial side after each block; raises if the net consumes the input."""
    side = input_side
    sides = []
    for _ in range(spec.conv_blocks):
        side = side - spec.kernel_size + 1
        if side < 1:
            raise ShapeMismatch(
                f"{spec.conv_blocks} blocks of kernel {spec.kernel_size} "
                f"do not fit a {input_side}x{input_side} input"
            )
        side //= 2
        if side < 1:
            raise ShapeMismatch("pooling consumed the spatial dimensions")
        sides.append(side)
    return sides


def _uniform(rng, fan_in: int, shape) -> np.ndarray:
    limit = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-limit, limit, size=shape)


def init_weights(spec: NetworkSpec, input_side: int = MATRIX_SIDE) -> EmbedderWeights:
    sides = _plan_sides(spec, input_side)
    rng = np.random.default_rng([spec.seed, 0])
    k, f = spec.kernel_size, spec.conv_filters
    conv = []
    channels = 1
    for _ in range(spec.conv_blocks):
        fan_in = k * k * channels
        conv.append((_uniform(rng, fan_in, (k, k, channels, f)), np.zeros(f)))
        channels = f
    flat = sides[-1] * sides[-1] * f
    dense1 = (_uniform(rng, flat, (flat, spec.dense_width)), np.zeros(spec.dense_width))
    dense2 = (
        _uniform(rng, spec.dense_width, (spec.dense_width, spec.embedding_dim)),
        np.zeros(spec.embedding_dim),
    )
    return EmbedderWeights(spec=spec, input_side=input_side, conv=conv,
                           dense1=dense1, dense2=dense2)


def init_head(spec: NetworkSpec, n_classes: int) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng([spec.seed, 1])
    return _uniform(rng, spec.embedding_dim, (spec.embedding_dim, n_classes)), np.zeros(n_classes)


# --- forward / backward ---

def _im2col(x: np.ndarray, k: int) -> np.ndarray:
    n, h, w, c = x.shape
    ho, wo = h - k + 1, w - k + 1
    s = x.strides
    windows = np.lib.stride_tricks.as_strided(
        x, shape=(n, ho, wo, k, k, c), strides=(s[0], s[1], s[2], s[1], s[2], s[3])
    )
    return windows.reshape(n, ho, wo, k * k * c)


def _col2im(dcols: np.ndarray, x_shape, k: int) -> np.ndarray:
    n, h, w, c = x_shape
    ho, wo = h - k + 1, w - k + 1
    dx = np.zeros(x_shape)
    d = dcols.reshape(n, ho, wo, k, k, c)
    for i in range(k):
        for j in range(k):
            dx[:, i:i + ho, j:j + wo, :] += d[:, :, :, i, j, :]
    return dx


def _avgpool2(x: np.ndarray) -> np.ndarray:
    n, h, w, c = x.shape
    ho, wo = h // 2, w // 2
    return x[:, : ho * 2, : wo * 2, :].reshape(n, ho, 2, wo, 2, c).mean(axis=(2, 4))


def _avgpool2_back(dy: np.ndarray, x_shape) -> np.ndarray:
    n, h, w, c = x_shape
    ho, wo = h // 2, w // 2
    dx = np.zeros(x_shape)
    dx[:, : ho * 2, : wo * 2, :] = np.repeat(np.repeat(dy, 2, axis=1), 2, axis=2) / 4.0
    return dx


def _act(z: np.ndarray, kind: Activation) -> np.ndarray:
    if kind is Activation.RELU:
        return np.maximum(z, 0.0)
    return 1.0 / (1.0 + np.exp(-z))


def _act_grad(z: np.ndarray, a: np.ndarray, kind: Activation) -> np.ndarray:
    if kind is Activation.RELU:
        return (z > 0.0).astype(np.float64)
    return a * (1.0 - a)


def _forward_batch(weights: EmbedderWeights, X: np.ndarray,
                   train_mode: bool, rng) -> tuple[np.ndarray, dict]:
    """Embeddings for a (N, side, side) batch plus the cache backward needs."""
    spec = weights.spec
    if X.ndim != 3 or X.shape[1] != weights.input_side or X.shape[2] != weights.input_side:
        raise ShapeMismatch(
            f"expected (n, {weights.input_side}, {weights.input_side}) input, got {X.shape}"
        )
    if train_mode and spec.dropout_rate > 0 and rng is None:
        raise ValueError("train_mode with dropout needs an rng")

    x = X[:, :, :, None].astype(np.float64)
    blocks = []
    for w, b in weights.conv:
        cols = _im2col(x, spec.kernel_size)
        w2d = w.reshape(-1, w.shape[-1])
        z = cols @ w2d + b
        a = _act(z, spec.activation)
        if train_mode and spec.dropout_rate > 0:
            mask = (rng.random(a.shape) >= spec.dropout_rate) / (1.0 - spec.dropout_rate)
            d = a * mask
        else:
            mask = None
            d = a
        blocks.append({"x_shape": x.shape, "cols": cols, "z": z, "a": a,
                       "mask": mask, "d_shape": d.shape})
        x = _avgpool2(d)

    n = X.shape[0]
    flat = x.reshape(n, -1)
    w1, b1 = weights.dense1
    z1 = flat @ w1 + b1
    a1 = _act(z1, spec.activation)
    w2, b2 = weights.dense2
    e = a1 @ w2 + b2

    norms = np.sqrt((e * e).sum(axis=1))
    safe = norms > NORM_EPS
    emb = np.zeros_like(e)
    emb[safe] = e[safe] / norms[safe, None]
    emb[~safe, 0] = 1.0  # degenerate input: pin to a fixed unit vector

    cache = {"blocks": blocks, "pool_out_shape": x.shape, "flat": flat,
             "z1": z1, "a1": a1, "e": e, "norms": norms, "safe": safe, "emb": emb}
    return emb, cache


def _backward_batch(weights: EmbedderWeights, cache: dict, demb: np.ndarray) -> dict:
    """Gradients w.r.t. every weight given d(loss)/d(embedding)."""
    spec = weights.spec
    emb, e, norms, safe = cache["emb"], cache["e"], cache["norms"], cache["safe"]

    de = np.zeros_like(e)
    if safe.any():
        y = emb[safe]
        dy = demb[safe]
        dot = (y * dy).sum(axis=1, keepdims=True)
        de[safe] = (dy - y * dot) / norms[safe, None]

    a1, z1, flat = cache["a1"], cache["z1"], cache["flat"]
    w2, _ = weights.dense2
    d_dense2 = (a1.T @ de, de.sum(axis=0))
    da1 = de @ w2.T
    dz1 = da1 * _act_grad(z1, a1, spec.activation)
    w1, _ = weights.dense1
    d_dense1 = (flat.T @ dz1, dz1.sum(axis=0))
    dflat = dz1 @ w1.T

    dx = dflat.reshape(cache["pool_out_shape"])
    d_conv = [None] * len(weights.conv)
    for i in range(len(weights.conv) - 1, -1, -1):
        blk = cache["blocks"][i]
        w, _ = weights.conv[i]
        dd = _avgpool2_back(dx, blk["d_shape"])
        da = dd * blk["mask"] if blk["mask"] is not None else dd
        dz = da * _act_grad(blk["z"], blk["a"], spec.activation)
        w2d = w.reshape(-1, w.shape[-1])
        cols = blk["cols"]
        dw2d = cols.reshape(-1, cols.shape[-1]).T @ dz.reshape(-1, dz.shape[-1])
        d_conv[i] = (dw2d.reshape(w.shape), dz.sum(axis=(0, 1, 2)))
        dcols = dz @ w2d.T
        dx = _col2im(dcols, blk["x_shape"], spec.kernel_size)

    return {"conv": d_conv, "dense1": d_dense1, "dense2": d_dense2}


def forward(weights: EmbedderWeights, x, train_mode: bool = False, rng=None) -> np.ndarray:
    """Embed one preprocessed matrix; inference mode is deterministic."""
    matrix = x.matrix if isinstance(x, PreprocessedTrace) else np.asarray(x, dtype=np.float64)
    if matrix.ndim != 2:
        raise ShapeMismatch(f"expected a square matrix, got shape {matrix.shape}")
    emb, _ = _forward_batch(weights, matrix[None, :, :], train_mode, rng)
    return emb[0]


def embed_batch(weights: EmbedderWeights, X) -> np.ndarray:
    emb, _ = _forward_batch(weights, np.asarray(X, dtype=np.float64), False, None)
    return emb


# --- losses ---

def triplet_loss(a, p, n, margin: float) -> float:
    """max(0, |a-p|^2 - |a-n|^2 + margin) over embedding vectors."""
    a, p, n = (np.asarray(v, dtype=np.float64) for v in (a, p, n))
    if not (a.shape == p.shape == n.shape):
        raise DimensionMismatch("triplet vectors must share one dimension")
    d_ap = float(((a - p) ** 2).sum())
    d_an = float(((a - n) ** 2).sum())
    return max(0.0, d_ap - d_an + margin)


def mine_semi_hard(embeddings, labels, margin: float) -> np.ndarray:
    """All ordered (anchor, positive, negative) index triples with
    |a-p|^2 < |a-n|^2 < |a-p|^2 + margin, in lexicographic order."""
    E = np.asarray(embeddings, dtype=np.float64)
    labels = np.asarray(labels)
    sq = (E * E).sum(axis=1)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * (E @ E.T), 0.0)
    same = labels[:, None] == labels[None, :]
    n = E.shape[0]

    triples = []
    for a in range(n):
        positives = np.nonzero(same[a])[0]
        negatives = np.nonzero(~same[a])[0]
        if negatives.size == 0:
            continue
        for p in positives:
            if p == a:
                continue
            d_ap = d2[a, p]
            window = (d2[a, negatives] > d_ap) & (d2[a, negatives] < d_ap + margin)
            for neg in negatives[window]:
                triples.append((a, p, neg))
    if not triples:
        raise NoValidTriplets("no semi-hard triple in this batch")
    return np.asarray(triples, dtype=np.int64)


def classification_loss_and_grads(weights: EmbedderWeights, head, X, y_codes,
                                  *, train_mode: bool = False, rng=None):
    """Mean cross-entropy of the softmax head; grads for trunk and head."""
    emb, cache = _forward_batch(weights, np.asarray(X, dtype=np.float64), train_mode, rng)
    wh, bh = head
    logits = emb @ wh + bh
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1))
    n = X.shape[0]
    loss = float((log_z - shifted[np.arange(n), y_codes]).mean())

    probs = np.exp(shifted) / np.exp(shifted).sum(axis=1, keepdims=True)
    dlogits = probs
    dlogits[np.arange(n), y_codes] -= 1.0
    dlogits /= n
    d_head = (emb.T @ dlogits, dlogits.sum(axis=0))
    demb = dlogits @ wh.T
    return loss, _backward_batch(weights, cache, demb), d_head


_TRIPLE_CHUNK = 1 << 18


def triplet_loss_and_grads(weights: EmbedderWeights, X, triples, margin: float,
                           *, train_mode: bool = False, rng=None):
    """Mean triplet loss over a fixed triple set; grads for the trunk.

    A collapsed batch can mine tens of millions of triples; the per-triple
    gathers run in chunks so peak memory stays bounded, with one forward
    and one backward pass either way.
    """
    triples = np.asarray(triples, dtype=np.int64)
    emb, cache = _forward_batch(weights, np.asarray(X, dtype=np.float64), train_mode, rng)
    t = triples.shape[0]
    loss_sum = 0.0
    demb = np.zeros_like(emb)
    for start in range(0, t, _TRIPLE_CHUNK):
        a, p, n = triples[start:start + _TRIPLE_CHUNK].T
        d_ap = ((emb[a] - emb[p]) ** 2).sum(axis=1)
        d_an = ((emb[a] - emb[n]) ** 2).sum(axis=1)
        per = d_ap - d_an + margin
        active = per > 0
        loss_sum += float(np.maximum(per, 0.0).sum())
        aa, pp, nn = a[active], p[active], n[active]
        np.add.at(demb, aa, 2.0 * (emb[nn] - emb[pp]) / t)
        np.add.at(demb, pp, 2.0 * (emb[pp] - emb[aa]) / t)
        np.add.at(demb, nn, 2.0 * (emb[aa] - emb[nn]) / t)
    return loss_sum / t, _backward_batch(weights, cache, demb)


def _sgd(weights: EmbedderWeights, grads: dict, lr: float) -> None:
    for i, (w, b) in enumerate(weights.conv):
        dw, db = grads["conv"][i]
        w -= lr * dw
        b -= lr * db
    for pair, key in ((weights.dense1, "dense1"), (weights.dense2, "dense2")):
        dw, db = grads[key]
        pair[0][...] -= lr * dw
        pair[1][...] -= lr * db


# --- training ---

@dataclass
class TrainResult:
    weights: EmbedderWeights          # best validation epoch
    classes: list
    phase1_loss: list[float] = field(default_factory=list)
    triplet_loss: list[float] = field(default_factory=list)
    val_accuracy: list[float] = field(default_factory=list)
    best_epoch: int = 0
    final_weights: EmbedderWeights | None = None  # end of phase 2


def _as_matrix(item) -> np.ndarray:
    return item.matrix if isinstance(item, PreprocessedTrace) else np.asarray(item, dtype=np.float64)


def train(corpus, spec: NetworkSpec, tcfg: TripletConfig) -> TrainResult:
    """Two-phase fit over (preprocessed trace, device label) pairs.

    Phase 2 keeps the weights of whichever epoch scores best on held-out
    1-NN accuracy, the post-phase-1 state included.
    """
    X = np.stack([_as_matrix(item) for item, _ in corpus])
    labels = np.asarray([label for _, label in corpus])
    classes = sorted(set(labels.tolist()))
    if len(classes) < 2:
        raise InsufficientData("need at least two devices")
    counts = {c: int((labels == c).sum()) for c in classes}
    if min(counts.values()) < 2:
        raise InsufficientData("every device needs at least two traces")
    code = {c: i for i, c in enumerate(classes)}
    y = np.asarray([code[v] for v in labels.tolist()], dtype=np.int64)

    split_rng = np.random.default_rng([spec.seed, 3])
    val_mask = np.zeros(len(y), dtype=bool)
    for c in range(len(classes)):
        idx = split_rng.permutation(np.nonzero(y == c)[0])
        val_mask[idx[: max(1, idx.size // 4)]] = True
    tr, va = np.nonzero(~val_mask)[0], np.nonzero(val_mask)[0]

    weights = init_weights(spec, X.shape[1])
    head = init_head(spec, len(classes))

    rng1 = np.random.default_rng([spec.seed, 1])
    result = TrainResult(weights=weights, classes=classes)
    for _ in range(tcfg.phase1_epochs):
        order = rng1.permutation(tr)
        losses = []
        for start in range(0, order.size, tcfg.batch_size):
            batch = order[start:start + tcfg.batch_size]
            if batch.size < 2:
                continue
            loss, grads, d_head = classification_loss_and_grads(
                weights, head, X[batch], y[batch], train_mode=True, rng=rng1
            )
            _sgd(weights, grads, tcfg.learning_rate)
            head[0][...] -= tcfg.learning_rate * d_head[0]
            head[1][...] -= tcfg.learning_rate * d_head[1]
            losses.append(loss)
        result.phase1_loss.append(float(np.mean(losses)) if losses else float("nan"))

    def validation_accuracy() -> float:
        gallery = [(e, int(c)) for e, c in zip(embed_batch(weights, X[tr]), y[tr])]
        hits = sum(
            1 for e, c in zip(embed_batch(weights, X[va]), y[va])
            if knn_topk(gallery, e, 1)[0] == int(c)
        )
        return hits / va.size

    best = validation_accuracy()
    best_weights = weights.copy()
    result.val_accuracy.append(best)
    result.best_epoch = 0

    rng2 = np.random.default_rng([spec.seed, 2])
    for epoch in range(1, tcfg.epochs + 1):
        order = rng2.permutation(tr)
        losses = []
        for start in range(0, order.size, tcfg.batch_size):
            batch = order[start:start + tcfg.batch_size]
            if batch.size < 2:
                continue
            emb = embed_batch(weights, X[batch])
            try:
                triples = mine_semi_hard(emb, y[batch], tcfg.margin)
            except NoValidTriplets:
                continue
            loss, grads = triplet_loss_and_grads(
                weights, X[batch], triples, tcfg.margin, train_mode=True, rng=rng2
            )
            _sgd(weights, grads, tcfg.learning_rate)
            losses.append(loss)
        result.triplet_loss.append(float(np.mean(losses)) if losses else float("nan"))
        acc = validation_accuracy()
        result.val_accuracy.append(acc)
        if acc > best:
            best = acc
            best_weights = weights.copy()
            result.best_epoch = epoch

    result.weights = best_weights
    result.final_weights = weights
    return result


# --- inference helpers ---

def embed_record(weights: EmbedderWeights, record: FingerprintRecord) -> np.ndarray:
    """Mean of the seven per-trace embeddings, renormalized to unit length."""
    matrices = np.stack([preprocess(t).matrix for t in record.traces])
    mean = embed_batch(weights, matrices).mean(axis=0)
    norm = float(np.sqrt((mean * mean).sum()))
    if norm <= NORM_EPS:
        out = np.zeros_like(mean)
        out[0] = 1.0
        return out
    return mean / norm


def knn_topk(memorized, query, k: int) -> list:
    """Labels of the k nearest embeddings, deduplicated in first-hit order.

    Distance ties resolve to the earlier-inserted entry.
    """
    if not memorized:
        raise EmptyGallery("no memorized embeddings")
    gallery = np.asarray([e for e, _ in memorized], dtype=np.float64)
    q = np.asarray(query, dtype=np.float64)
    if q.shape[0] != gallery.shape[1]:
        raise DimensionMismatch("query dimension differs from the gallery")
    d2 = ((gallery - q) ** 2).sum(axis=1)
    order = np.argsort(d2, kind="stable")[:k]
    out, seen = [], set()
    for i in order:
        label = memorized[int(i)][1]
        if label not in seen:
            seen.add(label)
            out.append(label)
    return out


# --- distance analytics ---

_POPULATIONS = ("same_device", "cross_same_renderer", "cross_other_renderer")


@dataclass
class DistancePopulations:
    """Pairwise Euclidean distances split by device and renderer agreement."""

    same_device: np.ndarray
    cross_same_renderer: np.ndarray
    cross_other_renderer: np.ndarray

    def samples(self, name: str) -> np.ndarray:
        if name not in _POPULATIONS:
            raise ValueError(f"unknown population {name!r}")
        values = getattr(self, name)
        if values.size == 0:
            raise EmptyPopulation(name)
        return values

    def quantiles(self, name: str) -> dict[str, float]:
        values = self.samples(name)
        qs = np.quantile(values, [0.05, 0.25, 0.5, 0.75, 0.95])
        return dict(zip(("p05", "p25", "p50", "p75", "p95"), (float(v) for v in qs)))

    def fraction_below(self, name: str, threshold: float) -> float:
        values = self.samples(name)
        return float((values < threshold).mean())


def distance_populations(entries) -> DistancePopulations:
    """entries: (embedding, device_id, renderer, collection_key) tuples.

    Same-device pairs are drawn from distinct collections only; cross-device
    pairs split on whether the renderer strings agree.
    """
    E = np.asarray([e for e, _, _, _ in entries], dtype=np.float64)
    n = E.shape[0]
    devices = [d for _, d, _, _ in entries]
    renderers = [r for _, _, r, _ in entries]
    collections = [c for _, _, _, c in entries]

    buckets = {name: [] for name in _POPULATIONS}
    for i in range(n):
        di = ((E[i + 1:] - E[i]) ** 2).sum(axis=1) ** 0.5
        for off, dist in enumerate(di):
            j = i + 1 + off
            if devices[i] == devices[j]:
                if collections[i] != collections[j]:
                    buckets["same_device"].append(dist)
            elif renderers[i] == renderers[j]:
                buckets["cross_same_renderer"].append(dist)
            else:
                buckets["cross_other_renderer"].append(dist)
    return DistancePopulations(
        same_device=np.asarray(buckets["same_device"]),
        cross_same_renderer=np.asarray(buckets["cross_same_renderer"]),
        cross_other_renderer=np.asarray(buckets["cross_other_renderer"]),
    )


# --- persistence ---

_MAGIC = b"EUPR"
_VERSION = 1


def save_weights(weights: EmbedderWeights, path: str | Path) -> None:
    """Versioned binary: magic, JSON layer table, little-endian float64 data."""
    arrays = weights.arrays()
    spec = weights.spec
    header = {
        "spec": {
            "conv_blocks": spec.conv_blocks,
            "conv_filters": spec.conv_filters,
            "kernel_size": spec.kernel_size,
            "dropout_rate": spec.dropout_rate,
            "dense_width": spec.dense_width,
            "embedding_dim": spec.embedding_dim,
            "activation": spec.activation.value,
            "seed": spec.seed,
        },
        "input_side": weights.input_side,
        "arrays": [{"name": name, "shape": list(a.shape)} for name, a in arrays],
    }
    blob = json.dumps(header, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<II", _VERSION, len(blob)))
        fh.write(blob)
        for _, a in arrays:
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def load_weights(path: str | Path) -> EmbedderWeights:
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise ValueError("not an embedder weight file")
        version, header_len = struct.unpack("<II", fh.read(8))
        if version != _VERSION:
            raise ValueError(f"unsupported weight file version {version}")
        header = json.loads(fh.read(header_len).decode("utf-8"))
        spec_fields = dict(header["spec"])
        spec_fields["activation"] = Activation(spec_fields["activation"])
        spec = NetworkSpec(**spec_fields)
        weights = init_weights(spec, int(header["input_side"]))
        named = dict(weights.arrays())
        for entry in header["arrays"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            data = np.frombuffer(fh.read(8 * count), dtype="<f8").reshape(shape)
            named[entry["name"]][...] = data
    return weights
