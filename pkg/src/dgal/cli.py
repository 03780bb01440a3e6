"""Command-line entry point.

Subcommands:
  gen            write a synthetic dataset (CSV + metadata) from a preset
  run            execute an experiment matrix from a TOML config
  report         turn records JSONL into aggregate CSV / markdown tables
  dump-features  export extracted features for a checkpoint, optionally masked

Exit codes: 0 success, 2 configuration/usage error, 3 numeric runtime failure.
Flags override config-file values; the fully resolved configuration is echoed
into the output directory.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # 3.10
    import tomli as tomllib

from .data import (
    DomainDataset,
    combine_fragments,
    generate_rotated_gaussians,
    load_csv_dataset,
    load_idx_pairs,
    make_loo_splits,
    rotate_fragment,
    save_csv_dataset,
)
from .errors import ConsistencyError, ContractError, FormatError
from .forest import ForestConfig
from .loop import ExperimentConfig, run_matrix
from .mlp import TrainConfig, forward, load_checkpoint
from .weakfeat import WeakFeaturePlan  # noqa: F401  (plan JSON documented here)

GEN_PRESETS = {
    "rot-gauss": dict(angles=[0.0, 30.0, 60.0, 90.0], classes=5, per_class=200, noise_sigma=0.6),
}

CONFIG_ERRORS = (ContractError, FormatError, ConsistencyError, FileNotFoundError, KeyError, TypeError, tomllib.TOMLDecodeError)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CONFIG_ERRORS as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except (FloatingPointError, ZeroDivisionError, np.linalg.LinAlgError) as err:
        print(f"numeric failure: {err}", file=sys.stderr)
        return 3


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dgal", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a synthetic dataset")
    g.add_argument("--preset", required=True, choices=sorted(GEN_PRESETS))
    g.add_argument("--seed", type=int, default=7)
    g.add_argument("--out", type=Path, default=Path("."))
    g.add_argument("--classes", type=int)
    g.add_argument("--per-class", type=int)
    g.add_argument("--noise-sigma", type=float)
    g.add_argument("--angles", type=float, nargs="+")
    g.set_defaults(func=cmd_gen)

    r = sub.add_parser("run", help="run an experiment matrix from a TOML config")
    r.add_argument("--config", type=Path, required=True)
    r.add_argument("--out", type=Path, default=Path("runs"))
    r.add_argument("--strategy", choices=["random", "leastconf", "entropy", "daal", "daal-intra", "daal-inter"])
    r.add_argument("--rounds", type=int)
    r.add_argument("--budget-fraction", type=float)
    r.add_argument("--reps", type=int)
    r.add_argument("--seed", type=int)
    r.add_argument("--targets", type=int, nargs="+")
    r.add_argument("--no-weak-loss", action="store_true")
    r.set_defaults(func=cmd_run)

    t = sub.add_parser("report", help="aggregate records JSONL into tables")
    t.add_argument("records", type=Path, nargs="+")
    t.add_argument("--out", type=Path, default=Path("report.csv"))
    t.add_argument("--markdown", type=Path)
    t.add_argument("--diagnostics", type=Path)
    t.set_defaults(func=cmd_report)

    d = sub.add_parser("dump-features", help="export extracted features as CSV")
    d.add_argument("--checkpoint", type=Path, required=True)
    d.add_argument("--dataset", type=Path, required=True)
    d.add_argument("--out", type=Path, required=True)
    d.add_argument("--plan", type=Path)
    d.add_argument("--mask-domain", type=int)
    d.set_defaults(func=cmd_dump_features)
    return p


def cmd_gen(args) -> int:
    params = dict(GEN_PRESETS[args.preset])
    for key, val in (
        ("classes", args.classes),
        ("per_class", args.per_class),
        ("noise_sigma", args.noise_sigma),
        ("angles", args.angles),
    ):
        if val is not None:
            params[key] = val
    ds = generate_rotated_gaussians(seed=args.seed, **params)
    args.out.mkdir(parents=True, exist_ok=True)
    save_csv_dataset(ds, args.out / "dataset.csv")
    meta = {
        "preset": args.preset,
        "seed": args.seed,
        **{k: params[k] for k in sorted(params)},
        "num_samples": len(ds),
        "input_dim": ds.input_dim,
        "domain_names": ds.domain_names,
    }
    with open(args.out / "metadata.json", "w") as f:
        json.dump(meta, f, indent=2, sort_keys=True)
    for dom, name in enumerate(ds.domain_names):
        counts = [int(np.sum((ds.e == dom) & (ds.y == c))) for c in range(ds.num_classes)]
        print(f"{name}: " + " ".join(f"class{c}={v}" for c, v in enumerate(counts)))
    print(f"wrote {len(ds)} samples to {args.out / 'dataset.csv'}")
    return 0


def load_dataset_from_config(section: dict) -> DomainDataset:
    kind = section.get("kind", "rot-gauss")
    if kind == "rot-gauss":
        return generate_rotated_gaussians(
            seed=int(section.get("seed", 7)),
            angles=list(section.get("angles", GEN_PRESETS["rot-gauss"]["angles"])),
            classes=int(section.get("classes", 5)),
            per_class=int(section.get("per_class", 200)),
            noise_sigma=float(section.get("noise_sigma", 0.15)),
        )
    if kind == "csv":
        return load_csv_dataset(section["path"])
    if kind == "idx":
        frag = load_idx_pairs(section["images"], section["labels"])
        limit = section.get("limit")
        if limit is not None:
            frag.X, frag.y = frag.X[: int(limit)], frag.y[: int(limit)]
        width, height = int(section["width"]), int(section["height"])
        angles = [float(a) for a in section["angles"]]
        frags = [rotate_fragment(frag, a, width, height) for a in angles]
        return combine_fragments(frags, domain_names=[f"rot{a:g}" for a in angles])
    raise ContractError(f"unknown dataset kind {kind!r}")


def resolve_experiment(doc: dict, args) -> ExperimentConfig:
    exp = dict(doc.get("experiment", {}))
    if args.strategy is not None:
        exp["strategy"] = args.strategy
    if args.rounds is not None:
        exp["rounds"] = args.rounds
    if args.budget_fraction is not None:
        exp["budget_fraction"] = args.budget_fraction
    if args.reps is not None:
        exp["reps"] = args.reps
    if args.seed is not None:
        exp["seed"] = args.seed
    if args.targets is not None:
        exp["targets"] = args.targets
    if args.no_weak_loss:
        exp["weak_loss"] = False
    if "targets" in exp:
        exp["targets"] = tuple(int(t) for t in exp["targets"])
    exp["train"] = TrainConfig(**doc.get("train", {}))
    exp["forest"] = ForestConfig(**doc.get("forest", {}))
    return ExperimentConfig(**exp)


def cmd_run(args) -> int:
    with open(args.config, "rb") as f:
        doc = tomllib.load(f)
    cfg = resolve_experiment(doc, args)
    ds = load_dataset_from_config(doc.get("dataset", {}))
    split_sec = doc.get("split", {})
    splits = make_loo_splits(
        ds,
        val_fraction=float(split_sec.get("val_fraction", cfg.val_fraction)),
        seed=int(split_sec.get("seed", 3)),
    )

    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    (out / "checkpoints").mkdir(exist_ok=True)
    (out / "plans").mkdir(exist_ok=True)
    resolved = dataclasses.asdict(cfg)
    resolved["dataset"] = doc.get("dataset", {})
    resolved["split"] = {"val_fraction": float(split_sec.get("val_fraction", cfg.val_fraction)), "seed": int(split_sec.get("seed", 3))}
    with open(out / "resolved_config.json", "w") as f:
        json.dump(resolved, f, indent=2, sort_keys=True, default=str)

    traces: list = []
    runs, rows = run_matrix(
        [cfg], ds, splits,
        trace_sink=traces,
        checkpoint_dir=out / "checkpoints",
        plan_dir=out / "plans",
    )
    with open(out / "records.jsonl", "w") as f:
        for (target, strategy, rep), records in runs.items():
            for r in records:
                f.write(json.dumps({"target": target, "strategy": strategy, "rep": rep, **r.to_json_dict()}) + "\n")
    with open(out / "traces.jsonl", "w") as f:
        for t in traces:
            f.write(json.dumps(t) + "\n")
    write_rows_csv(rows, out / "aggregate.csv")
    for row in rows:
        print(
            f"{row['target']} {row['strategy']} round={row['round']} "
            f"frac={row['labeled_frac']:.3f} acc={row['acc_mean']:.4f}±{row['acc_std']:.4f}"
        )
    return 0


AGG_FIELDS = ["target", "strategy", "round", "labeled_frac", "acc_mean", "acc_std", "reps"]


def write_rows_csv(rows: list[dict], path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=AGG_FIELDS)
        w.writeheader()
        for row in rows:
            w.writerow({k: row[k] for k in AGG_FIELDS})


def read_records_jsonl(paths) -> list[dict]:
    out = []
    for path in paths:
        with open(path) as f:
            for line_no, line in enumerate(f, 1):
                line = line.strip()
                if not line:
                    continue
                try:
                    out.append(json.loads(line))
                except json.JSONDecodeError as err:
                    raise FormatError(f"{path}:{line_no}: bad JSON ({err})") from None
    if not out:
        raise ConsistencyError("no records found")
    return out


def cmd_report(args) -> int:
    records = read_records_jsonl(args.records)
    cells: dict[tuple[str, str, int], list[dict]] = {}
    for r in records:
        try:
            key = (r["target"], r["strategy"], int(r["round"]))
        except KeyError as err:
            raise ConsistencyError(f"record missing field {err}") from None
        cells.setdefault(key, []).append(r)

    rows = []
    for key in sorted(cells):
        recs = cells[key]
        accs = np.array([float(r["test_acc"]) for r in recs])
        rows.append(
            {
                "target": key[0],
                "strategy": key[1],
                "round": key[2],
                "labeled_frac": float(recs[0]["labeled_frac"]),
                "acc_mean": float(accs.mean()),
                "acc_std": float(accs.std()),
                "reps": len(recs),
            }
        )
    # mean over targets, weighting each target equally
    by_sr: dict[tuple[str, int], list[dict]] = {}
    for row in rows:
        by_sr.setdefault((row["strategy"], row["round"]), []).append(row)
    for (strategy, rnd) in sorted(by_sr):
        group = by_sr[(strategy, rnd)]
        rows.append(
            {
                "target": "AVG",
                "strategy": strategy,
                "round": rnd,
                "labeled_frac": float(np.mean([g["labeled_frac"] for g in group])),
                "acc_mean": float(np.mean([g["acc_mean"] for g in group])),
                "acc_std": float(np.mean([g["acc_std"] for g in group])),
                "reps": int(sum(g["reps"] for g in group)),
            }
        )
    write_rows_csv(rows, args.out)
    print(f"wrote {len(rows)} aggregate rows to {args.out}")

    if args.markdown is not None:
        write_markdown(rows, args.markdown)
        print(f"wrote markdown table to {args.markdown}")
    if args.diagnostics is not None:
        write_diagnostics_csv(records, args.diagnostics)
        print(f"wrote diagnostics table to {args.diagnostics}")
    return 0


def write_markdown(rows: list[dict], path) -> None:
    targets = sorted({r["target"] for r in rows} - {"AVG"}) + ["AVG"]
    strategies = sorted({r["strategy"] for r in rows})
    rounds = sorted({r["round"] for r in rows})
    lookup = {(r["target"], r["strategy"], r["round"]): r for r in rows}
    lines = []
    for target in targets:
        lines.append(f"## target {target}")
        lines.append("| round | " + " | ".join(strategies) + " |")
        lines.append("|---" * (len(strategies) + 1) + "|")
        for rnd in rounds:
            cells = []
            for s in strategies:
                r = lookup.get((target, s, rnd))
                cells.append(f"{100 * r['acc_mean']:.2f}" if r else "-")
            lines.append(f"| {rnd} | " + " | ".join(cells) + " |")
        lines.append("")
    Path(path).write_text("\n".join(lines))


DIAG_KEYS = ["d_intra_same", "d_intra_cross", "d_inter_same", "d_inter_cross"]


def write_diagnostics_csv(records: list[dict], path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["target", "strategy", "rep", "round"] + DIAG_KEYS)
        for r in sorted(records, key=lambda r: (r["target"], r["strategy"], r.get("rep", 0), r["round"])):
            diag = r.get("diagnostics") or {}
            w.writerow(
                [r["target"], r["strategy"], r.get("rep", 0), r["round"]]
                + [diag.get(k, "") for k in DIAG_KEYS]
            )


def cmd_dump_features(args) -> int:
    model = load_checkpoint(args.checkpoint)
    ds = load_csv_dataset(args.dataset)
    if ds.input_dim != model.input_dim:
        raise ContractError(
            f"dataset dim {ds.input_dim} does not match checkpoint dim {model.input_dim}"
        )
    mask = None
    if (args.plan is None) != (args.mask_domain is None):
        raise ContractError("--plan and --mask-domain must be given together")
    if args.plan is not None:
        with open(args.plan) as f:
            plan_doc = json.load(f)
        try:
            subset = plan_doc["subsets"][str(args.mask_domain)]
        except KeyError:
            raise ContractError(f"plan has no subset for domain {args.mask_domain}") from None
        mask = np.zeros(model.feature_dim)
        mask[np.asarray(subset, dtype=np.int64)] = 1.0

    F, _ = forward(model, ds.X)
    if mask is not None:
        F = F * mask
    with open(args.out, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["id", "domain", "label"] + [f"f{j}" for j in range(model.feature_dim)])
        for i in range(len(ds)):
            w.writerow([i, int(ds.e[i]), int(ds.y[i])] + [repr(float(v)) for v in F[i]])
    print(f"wrote {len(ds)} feature rows to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
