"""``pcflow`` command line: run, sweep, theory, plot."""

from __future__ import annotations

import argparse
import logging
import shlex
import sys
from dataclasses import replace
from pathlib import Path

from . import bench, csvio
from .errors import PCFlowError
from .netcore import Activation
from .plot import plot_files, render_svg, theory_series

log = logging.getLogger("pcflow")


def _activation(text: str) -> str:
    try:
        Activation.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None
    return text


def _floats(text: str) -> tuple[float, ...]:
    try:
        vals = tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _ints(text: str) -> tuple[int, ...]:
    vals = _floats(text)
    if any(v != int(v) for v in vals):
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    return tuple(int(v) for v in vals)


def _add_training_flags(p: argparse.ArgumentParser, solver_flags=("solver", "dt", "t_max", "tol")) -> None:
    d = bench.RunConfig()
    g = p.add_argument_group("data")
    g.add_argument("--dataset", choices=["mnist", "fashion", "synthetic"], default=d.dataset)
    g.add_argument("--data-dir", help="directory with IDX files (default: $PCFLOW_DATA_DIR)")
    g.add_argument("--train-subset", type=int, default=d.train_subset, help="first N training samples (0: all)")
    g.add_argument("--test-subset", type=int, default=d.test_subset, help="first N test samples (0: all)")
    g = p.add_argument_group("model and training")
    g.add_argument("--hidden-layers", type=int, default=d.hidden_layers)
    g.add_argument("--width", type=int, default=d.width)
    g.add_argument("--activation", type=_activation, default=d.activation, help="tanh, relu, identity, leaky_relu[:slope]")
    g.add_argument("--optimizer", choices=["adam", "sgd"], default=d.optimizer)
    g.add_argument("--lr", type=float, default=d.lr)
    g.add_argument("--batch-size", type=int, default=d.batch_size)
    g.add_argument("--epochs", type=int, default=d.epochs)
    g.add_argument("--eval-every", type=int, default=d.eval_every, help="test accuracy every N steps (0: per epoch)")
    g.add_argument("--float32", action="store_true")
    g = p.add_argument_group("inference")
    if "solver" in solver_flags:
        g.add_argument("--solver", choices=["euler", "heun"], default=d.solver)
    if "dt" in solver_flags:
        g.add_argument("--dt", type=float, default=d.dt, help="Euler step, or Heun initial step")
    if "t_max" in solver_flags:
        g.add_argument("--t-max", type=float, default=d.t_max)
    g.add_argument("--rtol", type=float, default=d.rtol, help="Heun relative tolerance")
    g.add_argument("--atol", type=float, default=d.atol, help="Heun absolute tolerance")
    g.add_argument("--max-steps", type=int, default=d.max_steps, help="inference step budget")


def _config(args: argparse.Namespace) -> bench.RunConfig:
    cfg = bench.RunConfig(
        dataset=args.dataset,
        data_dir=args.data_dir,
        train_subset=args.train_subset or None,
        test_subset=args.test_subset or None,
        hidden_layers=args.hidden_layers,
        width=args.width,
        activation=args.activation,
        optimizer=args.optimizer,
        lr=args.lr,
        batch_size=args.batch_size,
        epochs=args.epochs,
        eval_every=args.eval_every,
        float32=args.float32,
        seed=getattr(args, "seed", 0),
        rtol=args.rtol,
        atol=args.atol,
        max_steps=args.max_steps,
    )
    for name in ("solver", "dt", "t_max"):
        if hasattr(args, name):
            cfg = replace(cfg, **{name: getattr(args, name)})
    return cfg


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pcflow", description="Predictive coding inference-solver experiments.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="train one network and log per-step timing")
    _add_training_flags(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="CSV path")
    p.add_argument("--record-energies", action="store_true", help="also write <out>.energies.csv with per-step energies")

    p = sub.add_parser("sweep", help="dt x T grid over solvers, depths and seeds")
    _add_training_flags(p, solver_flags=())
    p.add_argument("--dt-grid", type=_floats, default=bench.DEFAULT_DT_GRID)
    p.add_argument("--t-grid", type=_floats, default=bench.DEFAULT_T_GRID)
    p.add_argument("--depths", type=_ints, default=None, help="hidden-layer counts (default: --hidden-layers)")
    p.add_argument("--seeds", type=_ints, default=(0, 1, 2))
    p.add_argument("--solvers", default="euler,heun")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--select-from", help="skip training; re-run selection on an existing grid CSV")

    p = sub.add_parser("theory", help="closed-form vs numerical equilibrium energy on a linear network")
    _add_training_flags(p, solver_flags=("solver", "dt"))
    p.add_argument("--t-grid", type=_floats, default=bench.DEFAULT_T_GRID)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="CSV path; the SVG is written next to it")

    p = sub.add_parser("plot", help="render SVGs from run or theory CSVs")
    p.add_argument("csv", nargs="*")
    p.add_argument("--out-dir", default=".")
    return parser


def cmd_run(args, argv_text: str) -> int:
    cfg = _config(args)
    result = bench.train(cfg)
    bench.write_run_csv(args.out, cfg, result, argv=argv_text)
    if args.record_energies:
        rows = [{"step": r.step, "energy": r.energy} for r in result.records]
        csvio.write_table(Path(args.out).with_suffix(".energies.csv"), {"kind": "energies"}, ["step", "energy"], rows)
    log.info("final test accuracy %.4f", result.final_accuracy)
    return 0


def cmd_sweep(args, argv_text: str) -> int:
    out = Path(args.out_dir)
    if args.select_from:
        grid = bench.grid_from_table(csvio.read_table(args.select_from, csvio.GRID_COLUMNS))
        meta = {"kind": "grid", "source": args.select_from}
    else:
        cfg = _config(args)
        spec = bench.SweepSpec(
            dt_grid=args.dt_grid,
            t_grid=args.t_grid,
            depths=args.depths or (cfg.hidden_layers,),
            seeds=args.seeds,
            solvers=tuple(s.strip() for s in args.solvers.split(",") if s.strip()),
        )
        grid = bench.run_sweep(cfg, spec, jobs=args.jobs)
        meta = {"kind": "grid", "argv": argv_text, **cfg.metadata()}
        csvio.write_table(out / "grid.csv", meta, csvio.GRID_COLUMNS, grid)
    summary = bench.summarize_grid(grid)
    csvio.write_table(out / "summary.csv", {**meta, "kind": "summary"}, csvio.SUMMARY_COLUMNS, summary)
    selection = bench.select_cells(summary)
    csvio.write_table(
        out / "selection.csv",
        {**meta, "kind": "selection", "rule": "max mean accuracy; near-ties within one sd go to smaller T"},
        csvio.SUMMARY_COLUMNS,
        selection,
    )
    for c in selection:
        log.info("%s H=%d: dt=%g T=%g acc %.4f +- %.4f", c["solver"], c["depth"], c["dt"], c["t_max"], c["mean_acc"], c["sd_acc"])
    return 0


def cmd_theory(args, argv_text: str) -> int:
    cfg = _config(args)
    rows = bench.theory_run(cfg, args.t_grid)
    meta = {"kind": "theory", "argv": argv_text, **replace(cfg, activation="identity", bias=False).metadata()}
    meta["t_grid"] = ",".join(csvio.fmt(float(t)) for t in args.t_grid)
    csvio.write_table(args.out, meta, csvio.THEORY_COLUMNS, rows)
    table = csvio.read_table(args.out, csvio.THEORY_COLUMNS)
    svg = render_svg(theory_series(table), "Energy at the end of inference", "training step", "energy")
    csvio.write_atomic(Path(args.out).with_suffix(".svg"), svg)
    for s in bench.theory_summary(rows):
        log.info("T=%g mean gap %.3e final acc %.4f", s["t_max"], s["mean_gap"], s["final_acc"])
    return 0


def cmd_plot(args, argv_text: str) -> int:
    for path in plot_files(args.csv, args.out_dir):
        log.info("wrote %s", path)
    return 0


COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "theory": cmd_theory, "plot": cmd_plot}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args, shlex.join(["pcflow", *argv]))
    except (PCFlowError, OSError, ValueError) as exc:
        print(f"pcflow {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
