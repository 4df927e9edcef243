"""Random Forest on axis-aligned CART trees with Gini splits, written against
numpy only so split selection and tie-breaking stay fully specified.

Used as a multinomial device classifier and, in the linker, as a binary
same-device probability estimator.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class EmptyDataset(ValueError):
    """Fewer than two samples, or zero features."""


class SingleClassDataset(ValueError):
    """Binary training requires both classes to be present."""


class DimensionMismatch(ValueError):
    """Query feature count differs from the training feature count."""


class InsufficientSamplesPerClass(ValueError):
    """Stratified k-fold needs at least k samples of every class."""


class ZeroBaseRate(ValueError):
    """Accuracy gain is undefined for a non-positive base rate."""


@dataclass(frozen=True)
class ForestConfig:
    """features_per_split is "sqrt", "all", or a fixed integer count."""

    n_trees: int = 100
    max_depth: int | None = None
    min_samples_leaf: int = 1
    features_per_split: str | int = "sqrt"
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.max_depth is not None and self.max_depth < 1:
            raise ValueError("max_depth must be >= 1 when set")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")
        if isinstance(self.features_per_split, str):
            if self.features_per_split not in ("sqrt", "all"):
                raise ValueError("features_per_split must be 'sqrt', 'all', or an int")
        elif self.features_per_split < 1:
            raise ValueError("fixed features_per_split must be >= 1")


@dataclass
class _Tree:
    """Columnar node arrays; feature -1 marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    histogram: np.ndarray  # (n_nodes, n_classes) sample counts at leaves


@dataclass
class ForestModel:
    config: ForestConfig
    classes: list
    n_features: int
    trees: list[_Tree] = field(default_factory=list)


def _feature_count(rule: str | int, n_features: int) -> int:
    if rule == "sqrt":
        return max(1, int(np.sqrt(n_features)))
    if rule == "all":
        return n_features
    return min(int(rule), n_features)


def _best_split(X: np.ndarray, y: np.ndarray, n_classes: int,
                feat: np.ndarray, min_leaf: int):
    """Scan the sampled features for the lowest weighted Gini impurity.

    Ties resolve to the lowest feature index, then the lowest threshold;
    `feat` must be sorted ascending for that to hold.
    """
    n = X.shape[0]
    sub = X[:, feat]
    order = np.argsort(sub, axis=0, kind="stable")
    xs = np.take_along_axis(sub, order, axis=0)
    ys = y[order]  # (n, m) labels sorted per column

    onehot = ys[:, :, None] == np.arange(n_classes)[None, None, :]
    cum = onehot.astype(np.float64).cumsum(axis=0)  # (n, m, C)
    total = cum[-1]  # (m, C), identical columns

    left_n = np.arange(1, n, dtype=np.float64)[:, None]  # (n-1, 1)
    right_n = n - left_n
    left_c = cum[:-1]  # (n-1, m, C)
    right_c = total[None, :, :] - left_c
    gini_left = 1.0 - (left_c ** 2).sum(axis=2) / left_n ** 2
    gini_right = 1.0 - (right_c ** 2).sum(axis=2) / right_n ** 2
    weighted = (left_n * gini_left + right_n * gini_right) / n

    valid = xs[1:] > xs[:-1]
    if min_leaf > 1:
        ok = (left_n >= min_leaf) & (right_n >= min_leaf)
        valid = valid & ok
    if not valid.any():
        return None
    weighted = np.where(valid, weighted, np.inf)

    best = weighted.min()
    rows, cols = np.nonzero(weighted == best)
    # lowest feature wins first, then lowest threshold within it
    pick = np.lexsort((rows, cols))[0]
    r, c = rows[pick], cols[pick]
    threshold = (xs[r, c] + xs[r + 1, c]) / 2.0
    return float(best), int(feat[c]), float(threshold)


def _gini(counts: np.ndarray) -> float:
    n = counts.sum()
    if n == 0:
        return 0.0
    return float(1.0 - ((counts / n) ** 2).sum())


def _grow_tree(X: np.ndarray, y: np.ndarray, n_classes: int,
               cfg: ForestConfig, rng) -> _Tree:
    n_features = X.shape[1]
    m = _feature_count(cfg.features_per_split, n_features)
    feature, threshold, left, right, hist = [], [], [], [], []

    def new_node():
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        hist.append(np.zeros(n_classes))
        return len(feature) - 1

    def build(idx: np.ndarray, depth: int) -> int:
        node = new_node()
        counts = np.bincount(y[idx], minlength=n_classes).astype(np.float64)
        hist[node] = counts
        if (
            _gini(counts) == 0.0
            or idx.size < 2 * cfg.min_samples_leaf
            or (cfg.max_depth is not None and depth >= cfg.max_depth)
        ):
            return node
        feat = np.sort(rng.choice(n_features, size=m, replace=False))
        split = _best_split(X[idx], y[idx], n_classes, feat, cfg.min_samples_leaf)
        if split is None or split[0] >= _gini(counts):
            return node
        _, f, thr = split
        go_left = X[idx, f] <= thr
        feature[node] = f
        threshold[node] = thr
        left[node] = build(idx[go_left], depth + 1)
        right[node] = build(idx[~go_left], depth + 1)
        return node

    build(np.arange(X.shape[0]), 0)
    return _Tree(
        feature=np.asarray(feature, dtype=np.int64),
        threshold=np.asarray(threshold),
        left=np.asarray(left, dtype=np.int64),
        right=np.asarray(right, dtype=np.int64),
        histogram=np.vstack(hist),
    )


def fit(X, y, cfg: ForestConfig, *, binary: bool = False) -> ForestModel:
    """Train a bagged forest: per-tree bootstrap plus per-split feature draws.

    `binary` enforces that both classes are present; multinomial training
    only warns on a single class (the model then degenerates to a constant).
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise DimensionMismatch("X must be 2-d with one row per label")
    if X.shape[0] < 2 or X.shape[1] < 1:
        raise EmptyDataset("need at least 2 samples and 1 feature")
    classes = sorted(set(y.tolist()))
    if len(classes) < 2:
        if binary:
            raise SingleClassDataset("binary training needs both classes")
        warnings.warn("training data holds a single class", stacklevel=2)
    code = {c: i for i, c in enumerate(classes)}
    y_codes = np.asarray([code[v] for v in y.tolist()], dtype=np.int64)

    model = ForestModel(config=cfg, classes=list(classes), n_features=X.shape[1])
    n = X.shape[0]
    for t in range(cfg.n_trees):
        trng = np.random.default_rng([cfg.seed, t])
        boot = trng.integers(0, n, size=n)
        model.trees.append(_grow_tree(X[boot], y_codes[boot], len(classes), cfg, trng))
    return model


def _tree_proba(tree: _Tree, X: np.ndarray) -> np.ndarray:
    node = np.zeros(X.shape[0], dtype=np.int64)
    while True:
        internal = tree.feature[node] >= 0
        if not internal.any():
            break
        rows = np.nonzero(internal)[0]
        nd = node[rows]
        go_left = X[rows, tree.feature[nd]] <= tree.threshold[nd]
        node[rows] = np.where(go_left, tree.left[nd], tree.right[nd])
    counts = tree.histogram[node]
    return counts / counts.sum(axis=1, keepdims=True)


def predict_proba_batch(model: ForestModel, X) -> np.ndarray:
    """Mean of per-tree leaf class frequencies, rows aligned with model.classes."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise DimensionMismatch(
            f"expected {model.n_features} features, got {X.shape[-1] if X.ndim else 0}"
        )
    out = np.zeros((X.shape[0], len(model.classes)))
    for tree in model.trees:
        out += _tree_proba(tree, X)
    return out / len(model.trees)


def predict_proba(model: ForestModel, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise DimensionMismatch("predict_proba takes a single feature vector")
    return predict_proba_batch(model, x[None, :])[0]


def predict(model: ForestModel, X) -> list:
    proba = predict_proba_batch(model, X)
    return [model.classes[i] for i in proba.argmax(axis=1)]


def kfold_accuracy(X, y, cfg: ForestConfig, k: int = 5) -> tuple[float, float]:
    """Stratified k-fold accuracy; returns (mean, population std) over folds."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if X.shape[0] != y.shape[0]:
        raise DimensionMismatch("X and y lengths differ")
    rng = np.random.default_rng([cfg.seed, 0xF01D])
    classes = sorted(set(y.tolist()))
    fold_of = np.empty(y.shape[0], dtype=np.int64)
    for c in classes:
        idx = np.nonzero(y == c)[0]
        if idx.size < k:
            raise InsufficientSamplesPerClass(
                f"class {c!r} has {idx.size} samples, fold count is {k}"
            )
        idx = rng.permutation(idx)
        fold_of[idx] = np.arange(idx.size) % k
    accuracies = []
    for fold in range(k):
        test = fold_of == fold
        model = fit(X[~test], y[~test], cfg)
        hits = sum(
            1 for pred, truth in zip(predict(model, X[test]), y[test].tolist())
            if pred == truth
        )
        accuracies.append(hits / int(test.sum()))
    acc = np.asarray(accuracies)
    return float(acc.mean()), float(acc.std())


def accuracy_gain(accuracy: float, base_rate: float) -> float:
    """How many times better than guessing the majority mix, e.g. 0.93/0.10 = 9.3."""
    if base_rate <= 0:
        raise ZeroBaseRate("base rate must be positive")
    return accuracy / base_rate


# --- persistence ---

_FORMAT = "euprint-forest"
_VERSION = 1


def to_json(model: ForestModel) -> str:
    trees = [
        {
            "feature": t.feature.tolist(),
            "threshold": t.threshold.tolist(),
            "left": t.left.tolist(),
            "right": t.right.tolist(),
            "histogram": t.histogram.tolist(),
        }
        for t in model.trees
    ]
    cfg = model.config
    return json.dumps(
        {
            "format": _FORMAT,
            "version": _VERSION,
            "config": {
                "n_trees": cfg.n_trees,
                "max_depth": cfg.max_depth,
                "min_samples_leaf": cfg.min_samples_leaf,
                "features_per_split": cfg.features_per_split,
                "seed": cfg.seed,
            },
            "classes": model.classes,
            "n_features": model.n_features,
            "trees": trees,
        }
    )


def from_json(text: str) -> ForestModel:
    obj = json.loads(text)
    if obj.get("format") != _FORMAT or obj.get("version") != _VERSION:
        raise ValueError("not a recognized forest model file")
    model = ForestModel(
        config=ForestConfig(**obj["config"]),
        classes=obj["classes"],
        n_features=int(obj["n_features"]),
    )
    for t in obj["trees"]:
        model.trees.append(
            _Tree(
                feature=np.asarray(t["feature"], dtype=np.int64),
                threshold=np.asarray(t["threshold"]),
                left=np.asarray(t["left"], dtype=np.int64),
                right=np.asarray(t["right"], dtype=np.int64),
                histogram=np.asarray(t["histogram"]),
            )
        )
    return model


def save_model(model: ForestModel, path: str | Path) -> None:
    Path(path).write_text(to_json(model), encoding="utf-8")


def load_model(path: str | Path) -> ForestModel:
    return from_json(Path(path).read_text(encoding="utf-8"))
