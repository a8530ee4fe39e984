"""Closed-form vs numerical equilibrium energy over a grid of inference horizons.

    python scripts/theory_curves.py --data-dir data/mnist --out results/theory/theory.csv
"""

import argparse
from pathlib import Path

from scipy.stats import spearmanr

from pcflow import bench, csvio
from pcflow.cli import main as pcflow


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--data-dir")
    ap.add_argument("--out", default="results/theory/theory.csv")
    ap.add_argument("--hidden-layers", default="10")
    ap.add_argument("--width", default="64")
    ap.add_argument("--t-grid", default="5,10,20,50,100,200")
    args = ap.parse_args(argv)
    flags = ["theory", "--hidden-layers", args.hidden_layers, "--width", args.width, "--t-grid", args.t_grid, "--out", args.out]
    if args.data_dir:
        flags += ["--data-dir", args.data_dir]
    if pcflow(flags) != 0:
        return 1
    table = csvio.read_table(args.out, csvio.THEORY_COLUMNS)
    rows = [{k: float(v) for k, v in r.items()} for r in table.rows]
    summary = bench.theory_summary(rows)
    for s in summary:
        print(f"T={s['t_max']:g}: mean gap {s['mean_gap']:.4g}, step-0 gap {s['first_gap']:.4g}, final acc {s['final_acc']:.3f}")
    rho = spearmanr([s["t_max"] for s in summary], [s["final_acc"] for s in summary]).statistic
    print(f"Spearman(T, accuracy) = {rho:.3f}; plot: {Path(args.out).with_suffix('.svg')}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
