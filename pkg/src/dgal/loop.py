"""Active-learning experiment loop over leave-one-domain-out splits.

Each round labels a batch from the pool (round 1 randomly, later rounds via
the configured strategy scored with the previous round's model), optionally
builds a weak-feature plan from the fresh labeled set, retrains the model
from a new initialization with an iteration budget proportional to the
labeled fraction, and records accuracies plus distance diagnostics.

All randomness derives from one root seed per (target, repetition), shared
across strategies so compared runs start from the same round-1 batch.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ._seeds import rng_for, seed_for
from .data import DomainDataset, Split, init_pool, pool_label
from .errors import ContractError
from .forest import ForestConfig
from .mlp import MlpModel, TrainConfig, extract, forward, init_model, save_checkpoint, train_model
from .selection import STRATEGIES, compute_centroids, distance_diagnostics, select
from .weakfeat import build_plan

log = logging.getLogger(__name__)


@dataclass
class ExperimentConfig:
    strategy: str = "daal"
    rounds: int = 5
    budget_fraction: float | None = 0.1  # of the split's train pool, per round
    budget_per_round: int | None = None  # absolute alternative; set exactly one
    rho: float = 1.5
    alpha: float = 0.5
    m: int | None = None  # weak-subset size; default feature_dim // 2
    weak_loss: bool = True  # False trains plain cross entropy (the ERM path)
    reps: int = 3
    seed: int = 0
    val_fraction: float = 0.2
    targets: tuple[int, ...] | None = None  # None = every domain in turn
    train: TrainConfig = field(default_factory=TrainConfig)
    forest: ForestConfig = field(default_factory=ForestConfig)

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ContractError(f"unknown strategy {self.strategy!r}")
        if self.rounds < 1 or self.reps < 1:
            raise ContractError("rounds and reps must be >= 1")
        if (self.budget_fraction is None) == (self.budget_per_round is None):
            raise ContractError("set exactly one of budget_fraction, budget_per_round")
        if self.budget_fraction is not None:
            if not (0 < self.budget_fraction <= 1):
                raise ContractError("budget_fraction must be in (0, 1]")
            if self.budget_fraction * self.rounds > 1 + 1e-9:
                raise ContractError("budget_fraction * rounds exceeds the pool")
        if self.budget_per_round is not None and self.budget_per_round < 1:
            raise ContractError("budget_per_round must be >= 1")

    def resolve_budget(self, pool_size: int) -> int:
        if self.budget_per_round is not None:
            return self.budget_per_round
        return max(1, int(round(self.budget_fraction * pool_size)))

    def resolve_m(self) -> int:
        return self.m if self.m is not None else self.train.feature_dim // 2


@dataclass
class RoundRecord:
    round: int
    n_labeled: int
    labeled_frac: float
    selected_ids: list[int]
    loss_first: float
    loss_last: float
    val_acc: float
    val_acc_by_domain: dict[str, float]
    test_acc: float
    diagnostics: dict | None
    used_plan: bool
    truncated: bool

    def to_json_dict(self) -> dict:
        return dataclasses.asdict(self)


def evaluate(model: MlpModel, ids: np.ndarray, ds: DomainDataset) -> float:
    """Fraction of argmax-correct predictions on the given sample ids."""
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size == 0:
        raise ContractError("cannot evaluate on an empty id set")
    _, z = forward(model, ds.X[ids])
    return float(np.mean(z.argmax(axis=1) == ds.y[ids]))


def run_daal(
    cfg: ExperimentConfig,
    ds: DomainDataset,
    split: Split,
    root_seed: int,
    trace_sink: list | None = None,
    checkpoint_path=None,
    plan_path=None,
) -> list[RoundRecord]:
    """Run one seeded experiment on one split; one RoundRecord per round.

    Stops early (flagging the last record truncated) if the pool empties
    before the configured number of rounds. When paths are given, the final
    round's model checkpoint and weak-feature plan are written out.
    """
    tr = cfg.train
    n_train = split.train_ids.size
    budget = cfg.resolve_budget(n_train)
    pool = init_pool(split, budget, cfg.rounds)
    model: MlpModel | None = None
    records: list[RoundRecord] = []
    final_plan = None

    for t in range(1, cfg.rounds + 1):
        if pool.unlabeled.size == 0:
            if records:
                records[-1] = dataclasses.replace(records[-1], truncated=True)
            log.warning("pool exhausted after %d rounds (wanted %d)", t - 1, cfg.rounds)
            break
        strategy = "random" if t == 1 else cfg.strategy
        ct = None
        if strategy in ("daal", "daal-intra", "daal-inter"):
            lab_fb = extract(model, ds.X[pool.labeled], pool.labeled)
            ct = compute_centroids(lab_fb, ds.y[pool.labeled], ds.e[pool.labeled], ds.num_classes, ds.num_domains)
        chosen, trace = select(
            strategy, pool, ds, model,
            n=min(budget, pool.unlabeled.size),
            rho=cfg.rho,
            seed=seed_for(root_seed, "batch", t),
            ct=ct,
        )
        if trace_sink is not None:
            trace_sink.append({"round": t, **trace})
        pool = pool_label(pool, chosen, ds)
        labeled = pool.labeled
        Xl, yl, el = ds.X[labeled], ds.y[labeled], ds.e[labeled]

        plan = None
        if cfg.weak_loss and model is not None:
            try:
                plan = build_plan(
                    extract(model, Xl, labeled), yl, el,
                    dataclasses.replace(cfg.forest, seed=seed_for(root_seed, "plan", t)),
                    cfg.alpha, cfg.resolve_m(),
                )
            except ContractError as err:
                log.warning("round %d: weak-feature plan skipped (%s)", t, err)

        fresh = init_model(
            ds.input_dim, tr.hidden_dim, tr.feature_dim, ds.num_classes,
            seed=seed_for(root_seed, "init", t),
        )
        steps = max(1, math.ceil(tr.iters_full * labeled.size / n_train))
        if plan is None:
            losses = train_model(fresh, Xl, yl, tr, steps, rng_for(root_seed, "train", t))
        else:
            eff = dataclasses.replace(tr, lam=cfg.resolve_m() / tr.feature_dim)
            losses = train_model(
                fresh, Xl, yl, eff, steps, rng_for(root_seed, "train", t),
                masks=plan.masks_for(el), q=plan.weights_for(labeled),
            )
        model = fresh

        by_domain = {}
        for a in split.source_domains:
            dom_ids = split.val_ids[ds.e[split.val_ids] == a]
            if dom_ids.size:
                by_domain[str(a)] = evaluate(model, dom_ids, ds)
        diag = None
        val_f, _ = forward(model, ds.X[split.val_ids])
        try:
            diag = distance_diagnostics(val_f, ds.y[split.val_ids], ds.e[split.val_ids]).as_dict()
        except ContractError:
            pass
        records.append(
            RoundRecord(
                round=t,
                n_labeled=int(labeled.size),
                labeled_frac=float(labeled.size / n_train),
                selected_ids=[int(i) for i in chosen],
                loss_first=float(losses[0]),
                loss_last=float(losses[-1]),
                val_acc=evaluate(model, split.val_ids, ds),
                val_acc_by_domain=by_domain,
                test_acc=evaluate(model, split.test_ids, ds),
                diagnostics=diag,
                used_plan=plan is not None,
                truncated=False,
            )
        )
        final_plan = plan
    if checkpoint_path is not None and model is not None:
        save_checkpoint(model, checkpoint_path)
    if plan_path is not None and final_plan is not None:
        with open(plan_path, "w") as f:
            json.dump(final_plan.to_json_dict(), f, indent=2, sort_keys=True)
    return records


def run_matrix(
    cfgs: list[ExperimentConfig],
    ds: DomainDataset,
    splits: list[Split],
    trace_sink: list | None = None,
    checkpoint_dir=None,
    plan_dir=None,
):
    """Run every (config, target, repetition) combination and aggregate.

    Returns (runs, rows): runs maps (target, strategy, rep) to the round
    records; rows aggregate test accuracy per (target, strategy, round) over
    repetitions, aligned by equal labeled-set size for fair comparison.
    When directories are given, each run leaves its final checkpoint/plan
    there under "{target}_{strategy}_rep{rep}".
    """
    runs: dict[tuple[str, str, int], list[RoundRecord]] = {}
    for cfg in cfgs:
        targets = cfg.targets if cfg.targets is not None else tuple(range(ds.num_domains))
        for target in targets:
            split = next(s for s in splits if s.target_domain == target)
            name = ds.domain_names[target]
            for rep in range(cfg.reps):
                root = seed_for(cfg.seed, "run", target, rep)
                sink = None
                if trace_sink is not None:
                    sink = []
                stem = f"{name}_{cfg.strategy}_rep{rep}"
                records = run_daal(
                    cfg, ds, split, root, trace_sink=sink,
                    checkpoint_path=None if checkpoint_dir is None else f"{checkpoint_dir}/{stem}.npz",
                    plan_path=None if plan_dir is None else f"{plan_dir}/{stem}.json",
                )
                if trace_sink is not None:
                    # the per-round entry keeps its own "strategy" key, which is
                    # "random" for round 1 regardless of the configured run
                    for tr_item in sink:
                        trace_sink.append(
                            {"target": name, "run_strategy": cfg.strategy, "rep": rep, **tr_item}
                        )
                runs[(name, cfg.strategy, rep)] = records
    return runs, aggregate_rows(runs)


def aggregate_rows(runs: dict) -> list[dict]:
    """Aggregate test accuracy over repetitions.

    One row per (target, strategy, round) with mean and population standard
    deviation, ordered deterministically.
    """
    cells: dict[tuple[str, str, int], list] = {}
    for (target, strategy, _rep), records in runs.items():
        for r in records:
            cells.setdefault((target, strategy, r.round), []).append(r)
    rows = []
    for (target, strategy, rnd) in sorted(cells):
        recs = cells[(target, strategy, rnd)]
        accs = np.array([r.test_acc for r in recs])
        rows.append(
            {
                "target": target,
                "strategy": strategy,
                "round": rnd,
                "labeled_frac": recs[0].labeled_frac,
                "acc_mean": float(accs.mean()),
                "acc_std": float(accs.std()),
                "reps": len(recs),
            }
        )
    return rows
