"""Command line entry point: ``boundaryloss <subcommand>``."""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path
from typing import List, Optional

from ..estimator import BoundaryLossSegmenter
from ..exceptions import BoundaryLossError
from ..metrics import EvalReport
from ..model import load_checkpoint
from ..synthdata import Dataset, generate
from .benchmark import VARIANTS, benchmark_losses, format_table
from .config import ExperimentConfig, load_config, parse_value, shipped_configs
from .curves import emit_curves
from .experiment import OUTPUT_ROOT_ENV, load_dataset, output_root, run_seeds, write_distmaps
from .logs import MetricsLog


def _config(args) -> ExperimentConfig:
    overrides = {}
    for item in getattr(args, "set", None) or []:
        key, _, value = item.partition("=")
        overrides[key.strip()] = parse_value(value.strip())
    if args.config is None:
        cfg = ExperimentConfig.from_dict(overrides)
    else:
        path = Path(args.config)
        if not path.exists() and args.config in shipped_configs():
            path = shipped_configs()[args.config]
        cfg = load_config(path, overrides)
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    return cfg


def cmd_gen_data(args) -> int:
    cfg = _config(args)
    synth = cfg.synth_config()
    if args.seed is not None:
        synth = dataclasses.replace(synth, seed=args.seed)

    ds = generate(synth, args.n_samples or cfg.n_samples)
    out = ds.save(args.out or output_root() / "data")
    print(f"wrote {len(ds)} cases ({len(ds.train)} train / {len(ds.val)} val) to {out}")
    return 0


def cmd_make_distmaps(args) -> int:
    ds = Dataset.load(args.data)
    paths = write_distmaps(ds, args.mode, args.out or args.data)
    print(f"wrote {len(paths)} level-set maps ({args.mode}) to {paths[0].parent}")
    return 0


def cmd_train(args) -> int:
    cfg = _config(args)
    if args.data:
        cfg = cfg.replace(data_path=args.data)
    seeds = args.seeds or [cfg.seed]
    root = Path(args.out) if args.out else output_root() / cfg.name
    ds = load_dataset(cfg)
    results = []
    for s in seeds:
        res, _ = run_seeds(cfg.replace(output_dir=str(root / f"seed{s}")), [s], dataset=ds)
        results += res
        r = res[0]
        print(f"seed {s}: status={r.status} best_epoch={r.estimator.best_epoch_} "
              f"val_dsc={r.report.mean_dsc:.4f} val_hd95={r.report.mean_hd95:.3f} -> {r.output_dir}")
    pooled = EvalReport.over_runs([r.report for r in results])
    print(f"{cfg.name}: DSC {pooled.mean_dsc:.4f} ({pooled.std_dsc:.4f})  "
          f"HD95 {pooled.mean_hd95:.3f} ({pooled.std_hd95:.3f}) over {len(seeds)} run(s)")
    return 0 if all(r.status == "ok" for r in results) else 1


def cmd_evaluate(args) -> int:
    net, _ = load_checkpoint(args.checkpoint)
    ds = Dataset.load(args.data)
    split = ds.subset(args.split)
    est = BoundaryLossSegmenter(delta=args.delta, spacing=ds.spacing)
    est.net_ = net
    report = est.evaluate(split.images, split.masks)
    print(json.dumps({"mean_dsc": report.mean_dsc, "std_dsc": report.std_dsc,
                      "mean_hd95": report.mean_hd95, "std_hd95": report.std_hd95,
                      "n_cases": len(report.dsc), "hd95_sentinels": sum(report.hd95_sentinel)}, indent=2))
    return 0


def cmd_benchmark(args) -> int:
    rows = benchmark_losses(n_batches=args.batches, batch_size=args.batch_size, seed=args.seed or 0,
                            variants=args.variants)
    table = format_table(rows)
    print(table, end="")
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(table)
    return 0


def cmd_report(args) -> int:
    """Aggregate run directories (each with metrics.csv and report.json)."""
    runs = [Path(p) for p in args.runs]
    logs = {p.name: MetricsLog.read(p / "metrics.csv") for p in runs}
    csv_path, svg_path = emit_curves(logs, args.out or runs[0].parent, args.name)
    reports = []
    for p in runs:
        if (p / "report.json").exists():
            d = json.loads((p / "report.json").read_text())
            reports.append(EvalReport(dsc=d["dsc"], hd95=d["hd95"], hd95_sentinel=d["hd95_sentinel"],
                                      cases=d["cases"]))
    if reports:
        pooled = EvalReport.over_runs(reports)
        print(f"DSC {pooled.mean_dsc:.4f} ({pooled.std_dsc:.4f})  HD95 {pooled.mean_hd95:.3f} "
              f"({pooled.std_hd95:.3f}) over {len(reports)} run(s)")
    print(f"curves: {csv_path} {svg_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="boundaryloss", description=__doc__,
                                epilog=f"Default outputs go under ${OUTPUT_ROOT_ENV} (default ./runs).")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True):
        sp.add_argument("--seed", type=int, default=None)
        if config:
            sp.add_argument("--config", default=None, help="config file or name of a shipped config")
            sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")

    sp = sub.add_parser("gen-data", help="generate a synthetic dataset")
    common(sp)
    sp.add_argument("--n-samples", type=int, default=None)
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=cmd_gen_data)

    sp = sub.add_parser("make-distmaps", help="precompute level-set maps for a dataset")
    sp.add_argument("--data", required=True)
    sp.add_argument("--mode", choices=("2d", "3d"), default="2d")
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=cmd_make_distmaps)

    sp = sub.add_parser("train", help="train one config for one or more seeds")
    common(sp)
    sp.add_argument("--seeds", type=int, nargs="+", default=None)
    sp.add_argument("--data", default=None, help="dataset directory (overrides data.path)")
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("evaluate", help="evaluate a checkpoint on a dataset split")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--data", required=True)
    sp.add_argument("--split", default="val")
    sp.add_argument("--delta", type=float, default=0.5)
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("benchmark", help="per-batch timing of loss variants")
    common(sp, config=False)
    sp.add_argument("--batches", type=int, default=200)
    sp.add_argument("--batch-size", type=int, default=8)
    sp.add_argument("--variants", nargs="+", choices=tuple(VARIANTS), default=list(VARIANTS))
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=cmd_benchmark)

    sp = sub.add_parser("report", help="learning curves and pooled metrics over run directories")
    sp.add_argument("runs", nargs="+")
    sp.add_argument("--name", default="curves")
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=cmd_report)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (BoundaryLossError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
