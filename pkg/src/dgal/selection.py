"""Sample-selection strategies and the centroid-distance machinery behind them.

The adversarial strategy scores an unlabeled sample by how far its feature
sits from same-class centroids of other domains (cross-domain inconsistency)
minus how far it sits from other-class centroids of its own domain (class
ambiguity), in expectation over the model's predicted class probabilities.
High scores mark samples the current features handle worst. Selection runs
in two stages: a least-confidence pre-filter keeps ceil(rho * n) candidates,
then the top n by score are taken.

Distances are Euclidean throughout, matching the arithmetic-mean centroids.
All rankings break ties toward the lower sample id.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .data import DomainDataset, PoolState
from .errors import ContractError, UndefinedScoreError
from .mlp import FeatureBatch, MlpModel, extract

log = logging.getLogger(__name__)

STRATEGIES = ("random", "leastconf", "entropy", "daal", "daal-intra", "daal-inter")

# which of the two distance terms a daal variant uses
_TERMS = {"daal": "both", "daal-intra": "intra", "daal-inter": "inter"}


@dataclass(frozen=True)
class CentroidTable:
    """Mean feature per (class, domain) cell, with contributing counts.

    A cell is defined iff its count is >= 1; centroid rows of undefined
    cells are zero and must not be read.
    """

    centroids: np.ndarray  # (num_classes, num_domains, d)
    counts: np.ndarray  # (num_classes, num_domains) int64

    @property
    def num_classes(self) -> int:
        return self.counts.shape[0]

    @property
    def num_domains(self) -> int:
        return self.counts.shape[1]

    def defined(self, k: int, a: int) -> bool:
        return self.counts[k, a] >= 1


@dataclass(frozen=True)
class DifficultyScore:
    """Per-sample difficulty with the per-class terms kept for audit.

    Undefined per-class entries are NaN; phi is the renormalized expectation
    over the classes whose required terms exist.
    """

    id: int
    phi: float
    phi_intra_cross: np.ndarray  # (num_classes,)
    phi_inter_same: np.ndarray  # (num_classes,)


@dataclass(frozen=True)
class DistanceDiagnostics:
    """Mean pairwise feature distance per (class x domain) agreement quadrant.

    NaN marks a quadrant with no pairs.
    """

    d_intra_same: float
    d_intra_cross: float
    d_inter_same: float
    d_inter_cross: float

    def as_dict(self) -> dict:
        return {
            "d_intra_same": self.d_intra_same,
            "d_intra_cross": self.d_intra_cross,
            "d_inter_same": self.d_inter_same,
            "d_inter_cross": self.d_inter_cross,
        }


def compute_centroids(fb: FeatureBatch, y: np.ndarray, e: np.ndarray, num_classes: int, num_domains: int) -> CentroidTable:
    """Exact per-(class, domain) feature means over a labeled batch."""
    F = np.asarray(fb.f, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    e = np.asarray(e, dtype=np.int64)
    if F.shape[0] == 0:
        raise ContractError("empty labeled batch")
    d = F.shape[1]
    sums = np.zeros((num_classes, num_domains, d))
    counts = np.zeros((num_classes, num_domains), dtype=np.int64)
    np.add.at(sums, (y, e), F)
    np.add.at(counts, (y, e), 1)
    centroids = np.zeros_like(sums)
    nz = counts > 0
    centroids[nz] = sums[nz] / counts[nz][:, None]
    return CentroidTable(centroids=centroids, counts=counts)


def phi_intra_cross(f: np.ndarray, k: int, a: int, ct: CentroidTable) -> float:
    """Mean distance from f to class-k centroids of every other domain."""
    others = [b for b in range(ct.num_domains) if b != a and ct.defined(k, b)]
    if not others:
        raise UndefinedScoreError(f"no other-domain centroid for class {k}")
    dists = np.linalg.norm(f[None, :] - ct.centroids[k, others], axis=1)
    return float(dists.mean())


def phi_inter_same(f: np.ndarray, k: int, a: int, ct: CentroidTable) -> float:
    """Mean distance from f to other-class centroids within domain a."""
    others = [l for l in range(ct.num_classes) if l != k and ct.defined(l, a)]
    if not others:
        raise UndefinedScoreError(f"no other-class centroid in domain {a}")
    dists = np.linalg.norm(f[None, :] - ct.centroids[others, a], axis=1)
    return float(dists.mean())


def daal_score(fb: FeatureBatch, e: np.ndarray, ct: CentroidTable, terms: str = "both") -> list[DifficultyScore]:
    """Difficulty of each sample in the batch, given its domain tags.

    The expectation runs over the predicted class distribution, renormalized
    to the classes whose required terms are defined. Samples with no scorable
    class are omitted with a warning.
    """
    if terms not in ("both", "intra", "inter"):
        raise ContractError(f"unknown terms mode {terms!r}")
    e = np.asarray(e, dtype=np.int64)
    K = ct.num_classes
    out = []
    for i in range(len(fb.ids)):
        f, a, p = fb.f[i], int(e[i]), fb.p[i]
        intra = np.full(K, np.nan)
        inter = np.full(K, np.nan)
        contrib = np.full(K, np.nan)
        for k in range(K):
            try:
                intra[k] = phi_intra_cross(f, k, a, ct)
            except UndefinedScoreError:
                pass
            try:
                inter[k] = phi_inter_same(f, k, a, ct)
            except UndefinedScoreError:
                pass
            if terms == "both":
                contrib[k] = intra[k] - inter[k]
            elif terms == "intra":
                contrib[k] = intra[k]
            else:
                contrib[k] = -inter[k]
        ok = ~np.isnan(contrib)
        mass = float(p[ok].sum())
        if not ok.any() or mass <= 0.0:
            log.warning("sample %d has no scorable class; excluded from ranking", fb.ids[i])
            continue
        phi = float((p[ok] / mass) @ contrib[ok])
        out.append(
            DifficultyScore(id=int(fb.ids[i]), phi=phi, phi_intra_cross=intra, phi_inter_same=inter)
        )
    return out


def _order_ascending(ids: np.ndarray, key: np.ndarray) -> np.ndarray:
    # primary: key ascending; secondary: id ascending
    return np.lexsort((ids, key))


def daal_rank(fb: FeatureBatch, e: np.ndarray, ct: CentroidTable, n: int, terms: str = "both"):
    """Top-n candidate ids by difficulty, descending, ties toward lower id.

    Returns (picked ids in rank order, scores list). Candidates that cannot
    be scored are skipped here; the caller decides how to backfill.
    """
    scores = daal_score(fb, e, ct, terms=terms)
    scored_ids = np.array([s.id for s in scores], dtype=np.int64)
    phis = np.array([s.phi for s in scores])
    rank = _order_ascending(scored_ids, -phis)
    return scored_ids[rank[:n]], scores


def select(
    strategy: str,
    pool: PoolState,
    ds: DomainDataset,
    model: MlpModel | None,
    n: int,
    rho: float = 1.5,
    seed: int = 0,
    ct: CentroidTable | None = None,
):
    """Pick the next batch of ids from the unlabeled pool.

    Returns (sorted id array of size min(n, pool), trace dict). The trace
    carries stage-1 candidates and score percentiles for audit.
    """
    if strategy not in STRATEGIES:
        raise ContractError(f"unknown strategy {strategy!r}")
    if n <= 0:
        raise ContractError("n must be positive")
    ids = np.asarray(pool.unlabeled, dtype=np.int64)
    if ids.size == 0:
        raise ContractError("empty unlabeled pool")
    take = min(n, ids.size)
    trace = {"strategy": strategy, "pool_size": int(ids.size), "requested": int(n)}

    if strategy == "random":
        rng = np.random.default_rng(seed)
        chosen = np.sort(rng.choice(ids, size=take, replace=False))
        trace["final_ids"] = chosen.tolist()
        return chosen, trace

    if model is None:
        raise ContractError(f"strategy {strategy!r} needs a model")
    fb = extract(model, ds.X[ids], ids)

    if strategy == "leastconf":
        order = _order_ascending(ids, fb.p.max(axis=1))
        chosen = np.sort(ids[order[:take]])
        trace["final_ids"] = chosen.tolist()
        return chosen, trace

    if strategy == "entropy":
        ent = -np.sum(fb.p * np.log(fb.p, where=fb.p > 0, out=np.zeros_like(fb.p)), axis=1)
        order = _order_ascending(ids, -ent)
        chosen = np.sort(ids[order[:take]])
        trace["final_ids"] = chosen.tolist()
        return chosen, trace

    # adversarial variants: least-confidence pre-filter, then score ranking
    if ct is None:
        raise ContractError("adversarial selection needs a centroid table")
    if rho <= 1.0:
        raise ContractError("rho must be > 1")
    n_cand = min(int(math.ceil(rho * n)), ids.size)
    conf_order = _order_ascending(ids, fb.p.max(axis=1))
    cand_pos = conf_order[:n_cand]
    cand_ids = ids[cand_pos]
    cand_fb = FeatureBatch(ids=cand_ids, f=fb.f[cand_pos], z=fb.z[cand_pos], p=fb.p[cand_pos])
    top, scores = daal_rank(cand_fb, ds.e[cand_ids], ct, take, terms=_TERMS[strategy])

    scored_ids = np.array([s.id for s in scores], dtype=np.int64)
    phis = np.array([s.phi for s in scores])
    picked = list(top)
    if len(picked) < take:
        # score-less candidates backfill in stage-1 (confidence) order
        scored_set = set(scored_ids.tolist())
        left = [int(i) for i in cand_ids if int(i) not in scored_set]
        picked.extend(left[: take - len(picked)])
    chosen = np.sort(np.asarray(picked[:take], dtype=np.int64))

    trace["stage1_ids"] = cand_ids.tolist()
    trace["scored"] = int(scored_ids.size)
    if phis.size:
        trace["score_percentiles"] = {
            str(q): float(np.percentile(phis, q)) for q in (0, 25, 50, 75, 100)
        }
    trace["final_ids"] = chosen.tolist()
    return chosen, trace


def distance_diagnostics(F: np.ndarray, y: np.ndarray, e: np.ndarray, block: int = 256) -> DistanceDiagnostics:
    """Mean pairwise Euclidean distance split by class/domain agreement.

    Considers unordered pairs i < j. Runs blocked so the full n^2 distance
    matrix never materializes.
    """
    F = np.asarray(F, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    e = np.asarray(e, dtype=np.int64)
    n = F.shape[0]
    if n < 2 or np.unique(e).size < 2 or np.unique(y).size < 2:
        raise ContractError("diagnostics need >= 2 samples, 2 domains, 2 classes")

    sums = np.zeros(4)
    counts = np.zeros(4, dtype=np.int64)
    for i0 in range(0, n, block):
        i1 = min(i0 + block, n)
        diff = F[i0:i1, None, :] - F[None, :, :]
        dist = np.sqrt(np.sum(diff * diff, axis=2))
        same_y = y[i0:i1, None] == y[None, :]
        same_e = e[i0:i1, None] == e[None, :]
        upper = np.arange(i0, i1)[:, None] < np.arange(n)[None, :]
        for idx, mask in enumerate(
            (
                same_y & same_e,
                same_y & ~same_e,
                ~same_y & same_e,
                ~same_y & ~same_e,
            )
        ):
            m = mask & upper
            sums[idx] += dist[m].sum()
            counts[idx] += m.sum()

    vals = [s / c if c else float("nan") for s, c in zip(sums, counts)]
    return DistanceDiagnostics(
        d_intra_same=vals[0], d_intra_cross=vals[1], d_inter_same=vals[2], d_inter_cross=vals[3]
    )
