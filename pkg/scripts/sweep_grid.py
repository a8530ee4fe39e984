"""dt x T sweep for both solvers with the paper's grids, then the selected cells.

    python scripts/sweep_grid.py --data-dir data/mnist --out results/sweep --hidden-layers 3 --width 64

The full grid (3 dt x 7 T x 2 solvers x 3 seeds) is slow on one core; narrow it
with --dt-grid / --t-grid.
"""

import argparse
from pathlib import Path

from pcflow import csvio
from pcflow.cli import main as pcflow


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--data-dir")
    ap.add_argument("--out", default="results/sweep")
    ap.add_argument("--hidden-layers", default="3")
    ap.add_argument("--width", default="64")
    ap.add_argument("--dt-grid", default="0.5,0.1,0.05")
    ap.add_argument("--t-grid", default="5,10,20,50,100,200,500")
    ap.add_argument("--jobs", default="1")
    args = ap.parse_args(argv)
    flags = ["sweep", "--hidden-layers", args.hidden_layers, "--width", args.width, "--dt-grid", args.dt_grid,
             "--t-grid", args.t_grid, "--jobs", args.jobs, "--out-dir", args.out]
    if args.data_dir:
        flags += ["--data-dir", args.data_dir]
    if pcflow(flags) != 0:
        return 1
    for row in csvio.read_table(Path(args.out) / "selection.csv").rows:
        print(f"{row['solver']} H={row['depth']}: dt={row['dt']} T={row['t_max']} acc {float(row['mean_acc']):.3f} +- {float(row['sd_acc']):.3f}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
