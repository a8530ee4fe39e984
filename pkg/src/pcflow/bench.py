"""Experiment drivers behind the CLI: single runs, dt x T sweeps, theory-vs-numerical energy."""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields, replace
from itertools import product

import numpy as np

from . import csvio
from .dataio import BatchPlan, Dataset, batches, load_split, resolve_data_dir, synthetic_classification
from .errors import PCFlowError
from .energy import pc_energy
from .inference import SolverConfig, solve_inference
from .netcore import Activation, Network, init_activities_with_ffwd, init_network
from .optim import init_optim
from .theory import linear_equilibrium_energy
from .trainer import make_pc_step, test_discriminative_pc

log = logging.getLogger(__name__)

# dt and T grids of the runtime study
DEFAULT_DT_GRID = (0.5, 0.1, 0.05)
DEFAULT_T_GRID = (5.0, 10.0, 20.0, 50.0, 100.0, 200.0, 500.0)


@dataclass(frozen=True)
class RunConfig:
    dataset: str = "mnist"
    data_dir: str | None = None
    train_subset: int | None = 5000
    test_subset: int | None = 1000
    hidden_layers: int = 3
    width: int = 300
    activation: str = "tanh"
    solver: str = "heun"
    dt: float = 0.5
    t_max: float = 20.0
    rtol: float = 1e-4
    atol: float = 1e-4
    max_steps: int = 100_000
    optimizer: str = "adam"
    lr: float = 1e-3
    batch_size: int = 64
    epochs: int = 1
    seed: int = 0
    eval_every: int = 0  # 0: evaluate once per epoch
    float32: bool = False
    bias: bool = True

    @property
    def dtype(self):
        return np.float32 if self.float32 else np.float64

    def solver_config(self) -> SolverConfig:
        return SolverConfig(
            kind=self.solver,
            dt0=min(self.dt, self.t_max),
            t_max=self.t_max,
            rtol=self.rtol,
            atol=self.atol,
            max_steps=self.max_steps,
        )

    def metadata(self) -> dict[str, str]:
        meta = {k: csvio.fmt(v) for k, v in asdict(self).items()}
        meta["precision"] = "float32" if self.float32 else "float64"
        meta["input_scaling"] = "pixels/255" if self.dataset != "synthetic" else "none"
        meta["weight_init"] = "uniform(+-1/sqrt(fan_in)), zero bias"
        meta["output_activation"] = "identity"
        meta["git"] = csvio.git_describe()
        return meta


@dataclass
class RunRecord:
    step: int
    wall_ms: float
    energy: float
    rhs_evals: int
    accepted: int
    rejected: int


@dataclass
class RunResult:
    records: list[RunRecord]
    accuracy: list[tuple[int, float]]
    network: Network

    @property
    def final_accuracy(self) -> float:
        return self.accuracy[-1][1] if self.accuracy else float("nan")


def load_datasets(cfg: RunConfig) -> tuple[Dataset, Dataset]:
    if cfg.dataset == "synthetic":
        n_train = cfg.train_subset or 5000
        n_test = cfg.test_subset or 1000
        full = synthetic_classification(n_train + n_test, 20, 10, seed=cfg.seed + 12345)
        train = Dataset(full.inputs[:n_train], full.labels[:n_train], 10)
        test = Dataset(full.inputs[n_train:], full.labels[n_train:], 10)
    elif cfg.dataset in ("mnist", "fashion"):
        root = resolve_data_dir(cfg.data_dir)
        train = load_split(root, "train").subset(cfg.train_subset)
        test = load_split(root, "test").subset(cfg.test_subset)
    else:
        raise PCFlowError(f"unknown dataset {cfg.dataset!r}")
    cast = lambda d: Dataset(d.inputs.astype(cfg.dtype), d.labels, d.num_classes)  # noqa: E731
    return cast(train), cast(test)


def build_network(cfg: RunConfig, input_dim: int, num_classes: int) -> Network:
    """``hidden_layers`` hidden layers of ``width`` with the chosen activation, linear readout."""
    dims = [input_dim] + [cfg.width] * cfg.hidden_layers + [num_classes]
    acts = [Activation.parse(cfg.activation)] * cfg.hidden_layers + [Activation("identity")]
    return init_network(dims, acts, seed=cfg.seed, bias=cfg.bias, dtype=cfg.dtype)


def train(cfg: RunConfig, data: tuple[Dataset, Dataset] | None = None, on_step=None) -> RunResult:
    """Train for ``cfg.epochs``; wall time covers inference plus the parameter update only.

    ``on_step(step, net, result, x, y)`` sees the network the step started from.
    """
    train_set, test_set = data if data is not None else load_datasets(cfg)
    net = build_network(cfg, train_set.inputs.shape[1], train_set.num_classes)
    opt = init_optim(net, cfg.optimizer, cfg.lr)
    solver = cfg.solver_config()
    records: list[RunRecord] = []
    accuracy: list[tuple[int, float]] = []
    step = 0
    for epoch in range(cfg.epochs):
        plan = BatchPlan(cfg.batch_size, seed=cfg.seed * 1000 + epoch, drop_last=True)
        for x, y in batches(train_set, plan):
            y = y.astype(cfg.dtype)
            t0 = time.perf_counter_ns()
            res = make_pc_step(net, opt, y, x, solver)
            wall_ms = (time.perf_counter_ns() - t0) / 1e6
            s = res.solve_stats
            records.append(
                RunRecord(step, wall_ms, res.energies.total, s.rhs_evaluations, s.accepted_steps, s.rejected_steps)
            )
            if on_step is not None:
                on_step(step, net, res, x, y)
            net, opt = res.network, res.optim_state
            step += 1
            if cfg.eval_every and step % cfg.eval_every == 0:
                accuracy.append((step, test_discriminative_pc(net, test_set.inputs, test_set.labels)))
        if not cfg.eval_every or step % cfg.eval_every:
            accuracy.append((step, test_discriminative_pc(net, test_set.inputs, test_set.labels)))
    return RunResult(records, accuracy, net)


def run_rows(result: RunResult) -> list[dict]:
    rows = [asdict(r) for r in result.records]
    rows += [{"step": s, "test_acc": a} for s, a in result.accuracy]
    return rows


def write_run_csv(path, cfg: RunConfig, result: RunResult, argv: str | None = None) -> None:
    meta = {"kind": "run", **cfg.metadata()}
    if argv:
        meta["argv"] = argv
    steady = [r.wall_ms for r in result.records[1:]]
    meta["note"] = "step 0 is measured but excluded from summaries"
    if steady:
        # evaluation counts are hardware independent, unlike wall time
        meta["mean_rhs_evals_excl_step0"] = csvio.fmt(float(np.mean([r.rhs_evals for r in result.records[1:]])))
    csvio.write_table(path, meta, csvio.RUN_COLUMNS, run_rows(result))


def summarize_wall(records: list[RunRecord]) -> tuple[float, float]:
    """Mean and sd of per-step wall time, excluding step 0."""
    vals = np.array([r.wall_ms for r in records if r.step >= 1])
    if vals.size == 0:
        return float("nan"), float("nan")
    return float(vals.mean()), float(vals.std(ddof=1)) if vals.size > 1 else 0.0


# --------------------------------------------------------------------------
# Sweeps
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SweepSpec:
    dt_grid: tuple[float, ...] = DEFAULT_DT_GRID
    t_grid: tuple[float, ...] = DEFAULT_T_GRID
    depths: tuple[int, ...] = (3,)
    seeds: tuple[int, ...] = (0, 1, 2)
    solvers: tuple[str, ...] = ("euler", "heun")

    def __post_init__(self):
        for f in fields(self):
            if not getattr(self, f.name):
                raise ValueError(f"sweep grid {f.name!r} is empty")

    def cells(self):
        return list(product(self.solvers, self.depths, self.dt_grid, self.t_grid))


def _run_cell(args) -> dict:
    base, solver, depth, dt, t_max, seed = args
    cfg = replace(base, solver=solver, hidden_layers=depth, dt=dt, t_max=t_max, seed=seed)
    row = {"solver": solver, "depth": depth, "dt": dt, "t_max": t_max, "seed": seed}
    try:
        result = train(cfg)
    except PCFlowError as exc:
        log.warning("cell %s failed: %s", row, exc)
        return {**row, "status": f"failed: {type(exc).__name__}"}
    wall, _ = summarize_wall(result.records)
    evals = float(np.mean([r.rhs_evals for r in result.records]))
    return {**row, "test_acc": result.final_accuracy, "mean_wall_ms": wall, "mean_rhs_evals": evals, "status": "ok"}


def run_sweep(base: RunConfig, spec: SweepSpec, jobs: int = 1) -> list[dict]:
    tasks = [(base, s, d, dt, t, seed) for (s, d, dt, t) in spec.cells() for seed in spec.seeds]
    if jobs <= 1:
        return [_run_cell(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_run_cell, tasks))


def summarize_grid(rows: list[dict]) -> list[dict]:
    """Mean and sample sd (ddof=1, 0 for a single seed) of accuracy per (solver, depth, dt, T)."""
    groups: dict[tuple, list[dict]] = {}
    for r in rows:
        key = (r["solver"], int(r["depth"]), float(r["dt"]), float(r["t_max"]))
        groups.setdefault(key, []).append(r)
    out = []
    for (solver, depth, dt, t_max), rs in groups.items():
        accs = [float(r["test_acc"]) for r in rs if r.get("status", "ok") == "ok" and r.get("test_acc") not in (None, "")]
        n_failed = len(rs) - len(accs)
        mean = float(np.mean(accs)) if accs else float("nan")
        sd = float(np.std(accs, ddof=1)) if len(accs) > 1 else 0.0
        out.append(
            {
                "solver": solver,
                "depth": depth,
                "dt": dt,
                "t_max": t_max,
                "n_seeds": len(accs),
                "n_failed": n_failed,
                "mean_acc": mean,
                "sd_acc": sd if accs else float("nan"),
            }
        )
    return out


def select_cells(summary: list[dict]) -> list[dict]:
    """Per (solver, depth): the best mean accuracy, with near-ties going to the smaller T.

    A cell is a near-tie when its mean is within one sd (of the best cell) of
    the best mean. Among near-ties the smallest T wins, then the higher mean,
    then the larger dt.
    """
    by_group: dict[tuple, list[dict]] = {}
    for c in summary:
        if c["n_seeds"] and not math.isnan(c["mean_acc"]):
            by_group.setdefault((c["solver"], c["depth"]), []).append(c)
    chosen = []
    for key in sorted(by_group):
        cells = by_group[key]
        best = max(cells, key=lambda c: c["mean_acc"])
        band = best["sd_acc"] if not math.isnan(best["sd_acc"]) else 0.0
        near = [c for c in cells if c["mean_acc"] >= best["mean_acc"] - band]
        chosen.append(min(near, key=lambda c: (c["t_max"], -c["mean_acc"], -c["dt"])))
    return chosen


def grid_from_table(table: csvio.Table) -> list[dict]:
    rows = []
    for r in table.rows:
        row = dict(r)
        for col in ("dt", "t_max", "test_acc"):
            row[col] = csvio.parse_float(table, r, col)
        row["depth"] = int(csvio.parse_float(table, r, "depth"))
        rows.append(row)
    return rows


# --------------------------------------------------------------------------
# Theory vs numerical energy
# --------------------------------------------------------------------------


def theory_run(cfg: RunConfig, t_grid, data: tuple[Dataset, Dataset] | None = None) -> list[dict]:
    """One epoch per T on a bias-free linear network; per-step theory/numerical energies and accuracy."""
    cfg = replace(cfg, activation="identity", bias=False, float32=False)
    data = data if data is not None else load_datasets(cfg)
    test_set = data[1]
    rows = []
    for t_max in t_grid:
        run_cfg = replace(cfg, t_max=float(t_max), dt=min(cfg.dt, float(t_max)))

        def on_step(step, net, res, x, y, _t=float(t_max)):
            theory = linear_equilibrium_energy(net, x, y)
            numerical = res.energies.total
            rows.append(
                {
                    "t_max": _t,
                    "step": step,
                    "theory_energy": theory,
                    "numerical_energy": numerical,
                    "gap": numerical - theory,
                    "test_acc": test_discriminative_pc(res.network, test_set.inputs, test_set.labels),
                }
            )

        train(run_cfg, data, on_step=on_step)
    return rows


def theory_summary(rows: list[dict]) -> list[dict]:
    """Per T: mean gap over steps, the step-0 gap (same network for every T) and final accuracy."""
    out = []
    for t in sorted({r["t_max"] for r in rows}):
        rs = [r for r in rows if r["t_max"] == t]
        out.append(
            {
                "t_max": t,
                "mean_gap": float(np.mean([r["gap"] for r in rs])),
                "first_gap": rs[0]["gap"],
                "final_acc": rs[-1]["test_acc"],
            }
        )
    return out


# --------------------------------------------------------------------------
# Solver comparison on a shared training trajectory
# --------------------------------------------------------------------------

COMPARE_COLUMNS = ["step", "energy", "ref_energy", "rhs_evals", "ref_rhs_evals", "wall_ms", "ref_wall_ms"]


def compare_solvers(cfg: RunConfig, reference: SolverConfig, data: tuple[Dataset, Dataset] | None = None):
    """Train with ``cfg``'s solver; at every step also solve the same batch with ``reference``.

    Both solvers start from the same network and feedforward activities, so
    their equilibrium energies are directly comparable step by step.
    Returns (rows, RunResult).
    """
    rows = []

    def on_step(step, net, res, x, y):
        state = init_activities_with_ffwd(net, x).with_output(y)
        t0 = time.perf_counter_ns()
        out, stats = solve_inference(net, state, reference)
        ref_ms = (time.perf_counter_ns() - t0) / 1e6
        rows.append(
            {
                "step": step,
                "energy": res.energies.total,
                "ref_energy": pc_energy(net, out).total,
                "rhs_evals": res.solve_stats.rhs_evaluations,
                "ref_rhs_evals": stats.rhs_evaluations,
                "ref_wall_ms": ref_ms,
            }
        )

    result = train(cfg, data, on_step=on_step)
    for row, rec in zip(rows, result.records):
        row["wall_ms"] = rec.wall_ms
    return rows, result
