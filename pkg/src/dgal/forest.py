"""Random forest classifier over extracted features.

Trees are grown CART-style on bootstrap resamples with a random feature
subset per node, Gini impurity, and midpoint thresholds. The per-node split
search and prediction walks run through the backend kernels; everything else
(bootstrap, feature sampling, tree layout) lives here and is shared by both
backends, so forests are reproducible bit for bit regardless of backend.

All trees of a forest are stored in one set of flat arrays; `roots` gives
each tree's root index. Leaves carry class-count histograms; feature
importances are mean impurity decrease over trees, L1-normalized.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _forest_kernels as kernels
from ._seeds import rng_for
from .errors import ContractError, DegenerateDataError


@dataclass
class ForestConfig:
    n_trees: int = 100
    max_depth: int = 5
    min_leaf: int = 2
    max_features: int | str = "sqrt"  # "sqrt" or an explicit count
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1 or self.max_depth < 1 or self.min_leaf < 1:
            raise ContractError("n_trees, max_depth, min_leaf must be >= 1")
        if isinstance(self.max_features, str) and self.max_features != "sqrt":
            raise ContractError("max_features must be 'sqrt' or an int")

    def resolve_max_features(self, num_features: int) -> int:
        if self.max_features == "sqrt":
            return int(np.ceil(np.sqrt(num_features)))
        return min(int(self.max_features), num_features)


@dataclass
class Forest:
    config: ForestConfig
    num_classes: int
    num_features: int
    # flat node arrays shared by all trees; feature == -1 marks a leaf
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    hist: np.ndarray  # (n_nodes, num_classes) int64 class counts
    depth: np.ndarray
    roots: np.ndarray
    leaf_proba: np.ndarray  # (n_nodes, num_classes), zero rows at internal nodes
    raw_importance: np.ndarray  # (num_features,) mean impurity decrease

    @staticmethod
    def fit(X: np.ndarray, y: np.ndarray, cfg: ForestConfig, num_classes: int | None = None) -> "Forest":
        X = np.ascontiguousarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.int64)
        n, d = X.shape
        if n < 2:
            raise DegenerateDataError("need at least 2 samples to fit")
        if y.shape != (n,):
            raise ContractError("y must align with rows of X")
        K = int(y.max()) + 1 if num_classes is None else int(num_classes)
        if K < 2:
            raise DegenerateDataError("need at least 2 classes")
        k_feats = cfg.resolve_max_features(d)

        feature, threshold, left, right, hist, depth, roots = [], [], [], [], [], [], []
        decrease_sum = np.zeros(d)
        for t in range(cfg.n_trees):
            rng = rng_for(cfg.seed, "tree", t)
            boot = rng.integers(0, n, size=n)
            roots.append(len(feature))
            _grow_tree(
                X[boot], y[boot], K, cfg, k_feats, rng,
                feature, threshold, left, right, hist, depth, decrease_sum,
            )

        hist_arr = np.asarray(hist, dtype=np.int64).reshape(len(feature), K)
        feature_arr = np.asarray(feature, dtype=np.int64)
        leaf_proba = np.zeros((len(feature), K))
        leaves = feature_arr == -1
        leaf_proba[leaves] = hist_arr[leaves] / hist_arr[leaves].sum(axis=1, keepdims=True)
        return Forest(
            config=cfg,
            num_classes=K,
            num_features=d,
            feature=feature_arr,
            threshold=np.asarray(threshold, dtype=np.float64),
            left=np.asarray(left, dtype=np.int64),
            right=np.asarray(right, dtype=np.int64),
            hist=hist_arr,
            depth=np.asarray(depth, dtype=np.int64),
            roots=np.asarray(roots, dtype=np.int64),
            leaf_proba=leaf_proba,
            raw_importance=decrease_sum / cfg.n_trees,
        )

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.num_features:
            raise ContractError(f"expected (n, {self.num_features}) inputs")
        out = np.zeros((X.shape[0], self.num_classes))
        kernels.predict_add(
            self.feature, self.threshold, self.left, self.right,
            self.leaf_proba, self.roots, X, out,
        )
        return out / np.float64(self.config.n_trees)

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.predict_proba(X).argmax(axis=1)

    def importances(self) -> np.ndarray:
        """Mean impurity decrease per feature, L1-normalized. All-zero when
        no split ever used any feature."""
        total = self.raw_importance.sum()
        if total == 0.0:
            return np.zeros_like(self.raw_importance)
        return self.raw_importance / total


def _grow_tree(Xb, yb, K, cfg, k_feats, rng, feature, threshold, left, right, hist, depth, decrease_sum):
    """Grow one tree on an already-bootstrapped sample, appending nodes to the
    flat arrays. Left-first depth-first order keeps node numbering and the
    per-node feature draws deterministic."""
    d = Xb.shape[1]
    # stack of (row indices, depth, parent position, is_left_child)
    stack = [(np.arange(Xb.shape[0]), 0, -1, False)]
    while stack:
        idx, dep, parent, is_left = stack.pop()
        pos = len(feature)
        if parent >= 0:
            if is_left:
                left[parent] = pos
            else:
                right[parent] = pos
        h = np.bincount(yb[idx], minlength=K).astype(np.int64)
        n_node = idx.size
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        hist.append(h)
        depth.append(dep)

        if dep >= cfg.max_depth or n_node < 2 * cfg.min_leaf or h.max() == n_node:
            continue
        feats = np.sort(rng.choice(d, size=k_feats, replace=False)).astype(np.int64)
        Xn = np.ascontiguousarray(Xb[idx])
        best_feat, best_thr, best_cost = kernels.best_split(Xn, yb[idx], feats, K, cfg.min_leaf)
        if best_feat < 0:
            continue
        mask = Xb[idx, best_feat] <= best_thr
        left_idx, right_idx = idx[mask], idx[~mask]
        # a midpoint that rounds onto a data value can starve one side
        if left_idx.size < cfg.min_leaf or right_idx.size < cfg.min_leaf:
            continue
        nf = np.float64(n_node)
        parent_cost = nf - np.float64(np.sum(h.astype(np.int64) ** 2)) / nf
        decrease_sum[best_feat] += parent_cost - best_cost
        feature[pos] = best_feat
        threshold[pos] = best_thr
        stack.append((right_idx, dep + 1, pos, False))
        stack.append((left_idx, dep + 1, pos, True))
