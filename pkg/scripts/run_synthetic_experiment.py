#!/usr/bin/env python3
"""Run the full pipeline on a synthetic corpus and print the headline tables.

    python3 scripts/run_synthetic_experiment.py --config scripts/configs/small.json --out runs/small
"""

import argparse
import json
import logging
import sys
from pathlib import Path

from aphasia_graphs.config import load_config
from aphasia_graphs.pipeline import run_all


def fmt(v):
    return "   n/a" if v is None else f"{v:8.3f}"


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=None)
    ap.add_argument("--out", default="runs/synthetic")
    ap.add_argument("--seed", type=int, default=None)
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(levelname)s %(name)s %(message)s")

    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.with_seed(args.seed)
    out = Path(args.out)
    run_all(cfg, out, argv=sys.argv)

    metrics = json.loads((out / "evaluate" / "metrics.json").read_text())
    print(f"\n{cfg.eval.k}-fold cross-validation (mean over folds)")
    print(f"{'target':<22}{'model':<7}{'RMSE':>9}{'MAE':>9}{'Pearson':>9}{'Spearman':>9}")
    for r in metrics["reports"]:
        print(f"{r['target']:<22}{r['model']:<7}{fmt(r['rmse_mean'])} {fmt(r['mae_mean'])} "
              f"{fmt(r['pearson_mean'])} {fmt(r['spearman_mean'])}")

    print("\nAblation")
    for r in json.loads((out / "ablation" / "ablation.json").read_text())["rows"]:
        print(f"{r['target']:<10}{r['variant']:<16}R2={fmt(r['r_squared'])}  CV RMSE={fmt(r['rmse_mean'])}"
              f"  OOF RMSE={fmt(r['oof_rmse'])}")
    print(f"\nartifacts in {out.resolve()}")


if __name__ == "__main__":
    main()
