"""Per-domain weakly discriminative feature subsets and sample loss weights.

A feature scores high for domain e when it carries domain information (large
importance in the e-vs-rest task) but little label information (small
importance in the class task): w = w_e - alpha * w_y. The top-m features per
domain form the subset that the masked training route is allowed to see.

Per-sample weights q come from a multiclass domain classifier's posterior at
the sample's own domain, rescaled to mean 1 over the labeled set.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from ._seeds import seed_for
from .errors import ContractError
from .forest import Forest, ForestConfig
from .mlp import FeatureBatch


@dataclass(frozen=True)
class WeakFeaturePlan:
    subsets: dict[int, np.ndarray]  # domain -> sorted feature indices, each of size m
    weights: dict[int, float]  # sample id -> q, mean 1 over the labeled set
    alpha: float
    m: int
    mask_matrix: np.ndarray  # (num_domains, d) rows of 0/1; row e selects S_e

    def masks_for(self, e: np.ndarray) -> np.ndarray:
        """Per-sample 0/1 feature masks for an array of domain tags."""
        e = np.asarray(e, dtype=np.int64)
        known = np.isin(e, list(self.subsets))
        if not known.all():
            raise ContractError(f"no feature subset for domains {sorted(set(e[~known]))}")
        return self.mask_matrix[e]

    def weights_for(self, ids: np.ndarray) -> np.ndarray:
        try:
            return np.array([self.weights[int(i)] for i in ids])
        except KeyError as err:
            raise ContractError(f"id {err.args[0]} has no loss weight") from None

    def to_json_dict(self) -> dict:
        q = np.array(list(self.weights.values()))
        return {
            "alpha": self.alpha,
            "m": self.m,
            "subsets": {str(a): [int(j) for j in s] for a, s in sorted(self.subsets.items())},
            "weights_summary": {
                "count": int(q.size),
                "mean": float(q.mean()),
                "min": float(q.min()),
                "max": float(q.max()),
            },
        }


def score_features(w_y: np.ndarray, w_e: np.ndarray, alpha: float) -> np.ndarray:
    """Trade-off score w = w_e - alpha * w_y, elementwise."""
    w_y = np.asarray(w_y, dtype=np.float64)
    w_e = np.asarray(w_e, dtype=np.float64)
    if w_y.shape != w_e.shape or w_y.ndim != 1:
        raise ContractError("importance vectors must be 1-d and the same length")
    if alpha < 0:
        raise ContractError("alpha must be >= 0")
    return w_e - alpha * w_y


def _top_m(w: np.ndarray, m: int) -> np.ndarray:
    # stable sort on -w: ties resolve toward the lower feature index
    order = np.argsort(-w, kind="stable")
    return np.sort(order[:m])


def build_plan(
    fb: FeatureBatch,
    y: np.ndarray,
    e: np.ndarray,
    forest_cfg: ForestConfig,
    alpha: float,
    m: int,
) -> WeakFeaturePlan:
    """Fit the importance forests on labeled features and assemble the plan.

    One forest on class labels gives w_y; one binary forest per domain gives
    that domain's w_e; a multiclass domain forest supplies the posterior
    behind the loss weights. All forest seeds derive from forest_cfg.seed.
    """
    F = np.asarray(fb.f, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    e = np.asarray(e, dtype=np.int64)
    n, d = F.shape
    if y.shape != (n,) or e.shape != (n,):
        raise ContractError("labels and domains must align with features")
    if not (1 <= m <= d):
        raise ContractError(f"m must be in 1..{d}")
    if alpha < 0:
        raise ContractError("alpha must be >= 0")

    domains = np.unique(e)
    if domains.size < 2:
        raise ContractError("labeled set covers a single domain; no binary domain task exists")
    counts = {int(a): int((e == a).sum()) for a in domains}
    few = [a for a, c in counts.items() if c < 2]
    if few:
        raise ContractError(f"domains {few} have fewer than 2 labeled samples")

    w_y = Forest.fit(
        F, y, dataclasses.replace(forest_cfg, seed=seed_for(forest_cfg.seed, "wy"))
    ).importances()

    subsets = {}
    for a in domains:
        cfg_a = dataclasses.replace(forest_cfg, seed=seed_for(forest_cfg.seed, "we", int(a)))
        w_e = Forest.fit(F, (e == a).astype(np.int64), cfg_a, num_classes=2).importances()
        subsets[int(a)] = _top_m(score_features(w_y, w_e, alpha), m).astype(np.int64)

    dense = np.searchsorted(domains, e)
    dom_forest = Forest.fit(
        F,
        dense,
        dataclasses.replace(forest_cfg, seed=seed_for(forest_cfg.seed, "q")),
        num_classes=domains.size,
    )
    post = dom_forest.predict_proba(F)[np.arange(n), dense]
    mean = post.mean()
    q = post / mean if mean > 0 else np.ones(n)

    mask = np.zeros((int(e.max()) + 1, d))
    for a, s in subsets.items():
        mask[a, s] = 1.0
    return WeakFeaturePlan(
        subsets=subsets,
        weights={int(i): float(v) for i, v in zip(fb.ids, q)},
        alpha=float(alpha),
        m=int(m),
        mask_matrix=mask,
    )
