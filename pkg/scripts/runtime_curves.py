"""Wall time per training step for Euler vs Heun, 3 seeds each, then the runtime plot.

    python scripts/runtime_curves.py --data-dir data/mnist --out results/runtime --hidden-layers 3 --width 64

Solver settings default to Euler dt=0.5 and Heun dt0=0.5, both to T=20; pass
the cells chosen by ``pcflow sweep`` with --euler-dt/--heun-dt/--t-max.
"""

import argparse
from pathlib import Path

import numpy as np

from pcflow import csvio
from pcflow.cli import main as pcflow


def parse_args(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--data-dir")
    ap.add_argument("--dataset", default="mnist")
    ap.add_argument("--out", default="results/runtime")
    ap.add_argument("--hidden-layers", default="3")
    ap.add_argument("--width", default="64")
    ap.add_argument("--euler-dt", default="0.5")
    ap.add_argument("--heun-dt", default="0.5")
    ap.add_argument("--t-max", default="20")
    ap.add_argument("--seeds", default="0,1,2")
    return ap.parse_args(argv)


def main(argv=None):
    args = parse_args(argv)
    out = Path(args.out)
    paths = []
    for solver, dt in (("euler", args.euler_dt), ("heun", args.heun_dt)):
        for seed in args.seeds.split(","):
            path = out / f"{solver}_seed{seed}.csv"
            flags = ["run", "--dataset", args.dataset, "--hidden-layers", args.hidden_layers, "--width", args.width,
                     "--solver", solver, "--dt", dt, "--t-max", args.t_max, "--seed", seed, "--out", str(path)]
            if args.data_dir:
                flags += ["--data-dir", args.data_dir]
            if pcflow(flags) != 0:
                return 1
            paths.append(path)
    for solver in ("euler", "heun"):
        tables = [csvio.read_table(p) for p in paths if p.name.startswith(solver)]
        walls = [float(r["wall_ms"]) for t in tables for r in t.rows if r["wall_ms"] and int(r["step"]) >= 1]
        evals = [float(r["rhs_evals"]) for t in tables for r in t.rows if r["rhs_evals"] and int(r["step"]) >= 1]
        accs = [float(t.rows[-1]["test_acc"]) for t in tables]
        print(f"{solver}: {np.mean(walls):.1f} ms/step, {np.mean(evals):.1f} rhs evals/step, acc {np.mean(accs):.3f}")
    return pcflow(["plot", *map(str, paths), "--out-dir", str(out)])


if __name__ == "__main__":
    raise SystemExit(main())
