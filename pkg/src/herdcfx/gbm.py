"""Gradient-boosted regression trees with a logistic link.

Binary classifier over catalog-ordered feature vectors: stage-wise trees
fit to the negative gradient of (weighted) logistic loss, leaf values by a
single Newton step with L2 regularization lambda=1, exact greedy splits.
Everything is deterministic given (data, config): identical inputs yield
byte-identical serialized models.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import _kernels
from .features import FeatureCatalog

FORMAT_VERSION = 1
REG_LAMBDA = 1.0

POS_LABEL = "Sick"
NEG_LABEL = "Healthy"


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    n_trees: int = 60
    max_depth: int = 4
    min_samples_leaf: int = 20
    learning_rate: float = 0.2
    subsample_fraction: float = 1.0
    seed: int = 0
    positive_class_weight: float = 1.0

    def __post_init__(self) -> None:
        if self.n_trees < 0:
            raise ModelError("n_trees must be >= 0")
        if self.max_depth <= 0 or self.min_samples_leaf <= 0:
            raise ModelError("max_depth and min_samples_leaf must be positive")
        if not 0 < self.learning_rate <= 1:
            raise ModelError("learning_rate must be in (0, 1]")
        if not 0 < self.subsample_fraction <= 1:
            raise ModelError("subsample_fraction must be in (0, 1]")
        if self.positive_class_weight <= 0:
            raise ModelError("positive_class_weight must be positive")


@dataclass(frozen=True)
class Tree:
    feature: np.ndarray     # int64, -1 for leaf
    threshold: np.ndarray   # float64
    left: np.ndarray        # int64, tree-local child index
    right: np.ndarray
    value: np.ndarray       # float64, leaf log-odds contribution
    default_left: np.ndarray  # bool, routing for missing values

    def n_nodes(self) -> int:
        return int(self.feature.shape[0])


def _sigmoid(z: np.ndarray | float):
    return 1.0 / (1.0 + np.exp(-z))


class Ensemble:
    """Immutable trained model; shareable across threads."""

    def __init__(self, trees: Sequence[Tree], learning_rate: float,
                 base_score: float, catalog_version: str, n_features: int,
                 config: TrainConfig | None = None):
        self.trees = tuple(trees)
        self.learning_rate = float(learning_rate)
        self.base_score = float(base_score)
        self.catalog_version = catalog_version
        self.n_features = int(n_features)
        self.config = config
        self._flat = self._flatten()

    def _flatten(self):
        if not self.trees:
            z = np.zeros(0)
            zi = np.zeros(0, dtype=np.int64)
            return (zi, z, zi.copy(), zi.copy(), z.copy(),
                    np.zeros(0, dtype=np.bool_), np.zeros(1, dtype=np.int64))
        offsets = np.zeros(len(self.trees) + 1, dtype=np.int64)
        for t, tree in enumerate(self.trees):
            offsets[t + 1] = offsets[t] + tree.n_nodes()
        feature = np.concatenate([t.feature for t in self.trees])
        threshold = np.concatenate([t.threshold for t in self.trees])
        left = np.concatenate(
            [t.left + off for t, off in zip(self.trees, offsets[:-1])])
        right = np.concatenate(
            [t.right + off for t, off in zip(self.trees, offsets[:-1])])
        value = np.concatenate([t.value for t in self.trees])
        default_left = np.concatenate([t.default_left for t in self.trees])
        return feature, threshold, left, right, value, default_left, offsets

    def predict_margin(self, X: np.ndarray, n_trees: int | None = None) -> np.ndarray:
        """Raw log-odds: base_score + lr * sum of tree outputs."""
        X = np.ascontiguousarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ModelError(
                f"expected (n, {self.n_features}) input, got {X.shape}")
        feature, threshold, left, right, value, default_left, offsets = self._flat
        if n_trees is not None:
            offsets = offsets[:n_trees + 1]
        if offsets.shape[0] <= 1:
            return np.full(X.shape[0], self.base_score)
        return _kernels.predict_margin(X, feature, threshold, left, right,
                                       value, default_left, offsets,
                                       self.learning_rate, self.base_score)

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        p = _sigmoid(self.predict_margin(X))
        # keep strictly inside (0, 1)
        eps = 1e-15
        return np.clip(p, eps, 1.0 - eps)

    def model_hash(self) -> str:
        return hashlib.sha256(serialize_model(self)).hexdigest()[:16]


def predict_score(model: Ensemble, x) -> float:
    """P(Sick) for a single catalog-ordered vector; pure and deterministic."""
    values = np.asarray(getattr(x, "values", x), dtype=np.float64)
    if values.ndim != 1 or values.shape[0] != model.n_features:
        raise ModelError(
            f"expected vector of length {model.n_features}, got {values.shape}")
    return float(model.predict_proba(values[None, :])[0])


def classify(model: Ensemble, x, threshold: float = 0.5) -> str:
    if not 0 < threshold < 1:
        raise ModelError("threshold must be in (0, 1)")
    return POS_LABEL if predict_score(model, x) >= threshold else NEG_LABEL


def fit_arrays(X: np.ndarray, y: np.ndarray, config: TrainConfig,
               catalog_version: str = "v1") -> Ensemble:
    """Train on a dense feature matrix and 0/1 labels (1 = Sick)."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, nfeat = X.shape
    if n == 0:
        raise ModelError("empty training set")
    n_pos = int((y == 1).sum())
    if n_pos == 0 or n_pos == n:
        raise ModelError("training set must contain both classes")

    w = np.where(y == 1, config.positive_class_weight, 1.0)
    pos_rate = float((w * y).sum() / w.sum())
    base_score = float(np.log(pos_rate / (1.0 - pos_rate)))

    build = _kernels.build_tree
    presort = np.empty((nfeat, n), dtype=np.int64)
    for f in range(nfeat):
        presort[f] = np.argsort(X[:, f], kind="stable")

    rng = np.random.default_rng(config.seed)
    margin = np.full(n, base_score)
    trees: list[Tree] = []
    for _t in range(config.n_trees):
        p = _sigmoid(margin)
        grad = w * (p - y)
        hess = w * p * (1.0 - p)
        if config.subsample_fraction < 1.0:
            mask = rng.random(n) < config.subsample_fraction
            if not mask.any():
                mask[:] = True
        else:
            mask = np.ones(n, dtype=np.bool_)
        feature, threshold, left, right, value = build(
            X, grad, hess, presort, mask, config.max_depth,
            config.min_samples_leaf, REG_LAMBDA)
        tree = Tree(feature, threshold, left, right, value,
                    np.ones(feature.shape[0], dtype=np.bool_))
        trees.append(tree)
        one = Ensemble([tree], 1.0, 0.0, catalog_version, nfeat)
        margin = margin + config.learning_rate * one.predict_margin(X)
    return Ensemble(trees, config.learning_rate, base_score, catalog_version,
                    nfeat, config=config)


def train(instances, config: TrainConfig, catalog: FeatureCatalog) -> Ensemble:
    """Train from LabeledInstance records (see dataset module)."""
    if not instances:
        raise ModelError("empty training set")
    X = np.stack([inst.x.values for inst in instances])
    y = np.array([1.0 if inst.label == POS_LABEL else 0.0 for inst in instances])
    return fit_arrays(X, y, config, catalog_version=catalog.version)


def logistic_loss(model: Ensemble, X: np.ndarray, y: np.ndarray,
                  n_trees: int | None = None,
                  positive_class_weight: float = 1.0) -> float:
    """Regularized weighted logistic loss on (X, y) using the first n trees."""
    margin = model.predict_margin(X, n_trees=n_trees)
    w = np.where(y == 1, positive_class_weight, 1.0)
    data = float(np.sum(w * (np.logaddexp(0.0, margin) - y * margin)))
    k = len(model.trees) if n_trees is None else n_trees
    leaf_l2 = 0.0
    for tree in model.trees[:k]:
        leaves = tree.feature < 0
        leaf_l2 += float(np.sum(tree.value[leaves] ** 2))
    return data + 0.5 * REG_LAMBDA * leaf_l2


# ---------------------------------------------------------------------------
# Serialization: versioned JSON, documented field by field in README.


def _tree_to_dict(tree: Tree) -> dict:
    return {
        "feature": tree.feature.tolist(),
        "threshold": tree.threshold.tolist(),
        "left": tree.left.tolist(),
        "right": tree.right.tolist(),
        "value": tree.value.tolist(),
        "default_left": [bool(b) for b in tree.default_left],
    }


def _tree_from_dict(d: dict) -> Tree:
    return Tree(
        np.asarray(d["feature"], dtype=np.int64),
        np.asarray(d["threshold"], dtype=np.float64),
        np.asarray(d["left"], dtype=np.int64),
        np.asarray(d["right"], dtype=np.int64),
        np.asarray(d["value"], dtype=np.float64),
        np.asarray(d["default_left"], dtype=np.bool_),
    )


def serialize_model(model: Ensemble) -> bytes:
    doc = {
        "format_version": FORMAT_VERSION,
        "catalog_version": model.catalog_version,
        "n_features": model.n_features,
        "learning_rate": model.learning_rate,
        "base_score": model.base_score,
        "config": asdict(model.config) if model.config else None,
        "trees": [_tree_to_dict(t) for t in model.trees],
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()


def save_model(model: Ensemble, path: str | Path) -> None:
    Path(path).write_bytes(serialize_model(model))


def load_model(path: str | Path,
               expected_catalog_version: str | None = None) -> Ensemble:
    try:
        doc = json.loads(Path(path).read_bytes())
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ModelError(f"corrupt model file {path}: {exc}") from None
    if not isinstance(doc, dict) or doc.get("format_version") != FORMAT_VERSION:
        raise ModelError(f"unsupported model format in {path}")
    if (expected_catalog_version is not None
            and doc["catalog_version"] != expected_catalog_version):
        raise ModelError(
            f"model catalog_version {doc['catalog_version']!r} does not match "
            f"expected {expected_catalog_version!r}")
    config = TrainConfig(**doc["config"]) if doc.get("config") else None
    try:
        trees = [_tree_from_dict(t) for t in doc["trees"]]
        return Ensemble(trees, doc["learning_rate"], doc["base_score"],
                        doc["catalog_version"], doc["n_features"],
                        config=config)
    except (KeyError, TypeError) as exc:
        raise ModelError(f"corrupt model file {path}: {exc}") from None
