"""Minimal deterministic SVG line plots for run and theory CSVs.

No plotting library is used so the output is byte-stable for a given input,
which keeps golden-file tests meaningful.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import csvio
from .errors import PlotError

WIDTH, HEIGHT = 640, 400
MARGIN = {"left": 70, "right": 150, "top": 30, "bottom": 50}
PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"]


@dataclass
class Series:
    label: str
    x: np.ndarray
    y: np.ndarray
    lo: np.ndarray | None = None
    hi: np.ndarray | None = None
    dashed: bool = False


def _num(v: float) -> str:
    return f"{v:.2f}"


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        return [lo]
    return list(np.linspace(lo, hi, n))


def render_svg(series: list[Series], title: str, xlabel: str, ylabel: str) -> str:
    if not series or all(s.x.size == 0 for s in series):
        raise PlotError("no data to plot")
    xs = np.concatenate([s.x for s in series])
    ys = np.concatenate([np.concatenate([s.y] + [b for b in (s.lo, s.hi) if b is not None]) for s in series])
    x0, x1 = float(xs.min()), float(xs.max())
    y0, y1 = float(ys.min()), float(ys.max())
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y1 = y0 + 1.0
    pw = WIDTH - MARGIN["left"] - MARGIN["right"]
    ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]

    def px(v):
        return MARGIN["left"] + (v - x0) / (x1 - x0) * pw

    def py(v):
        return MARGIN["top"] + (1 - (v - y0) / (y1 - y0)) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">',
        '<rect width="100%" height="100%" fill="white"/>',
        f'<text x="{WIDTH / 2:.2f}" y="18" text-anchor="middle" font-size="14">{_esc(title)}</text>',
        f'<rect x="{MARGIN["left"]}" y="{MARGIN["top"]}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    for t in _ticks(x0, x1):
        out.append(f'<text x="{_num(px(t))}" y="{HEIGHT - MARGIN["bottom"] + 16}" text-anchor="middle" font-size="10">{t:.4g}</text>')
    for t in _ticks(y0, y1):
        out.append(f'<text x="{MARGIN["left"] - 6}" y="{_num(py(t) + 3)}" text-anchor="end" font-size="10">{t:.4g}</text>')
    out.append(f'<text x="{MARGIN["left"] + pw / 2:.2f}" y="{HEIGHT - 12}" text-anchor="middle" font-size="12">{_esc(xlabel)}</text>')
    out.append(
        f'<text x="16" y="{MARGIN["top"] + ph / 2:.2f}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 16 {MARGIN["top"] + ph / 2:.2f})">{_esc(ylabel)}</text>'
    )
    for i, s in enumerate(series):
        color = PALETTE[i % len(PALETTE)]
        if s.lo is not None and s.hi is not None:
            upper = [f"{_num(px(a))},{_num(py(b))}" for a, b in zip(s.x, s.hi)]
            lower = [f"{_num(px(a))},{_num(py(b))}" for a, b in zip(s.x[::-1], s.lo[::-1])]
            out.append(f'<polygon class="band" points="{" ".join(upper + lower)}" fill="{color}" fill-opacity="0.2" stroke="none"/>')
        pts = " ".join(f"{_num(px(a))},{_num(py(b))}" for a, b in zip(s.x, s.y))
        dash = ' stroke-dasharray="5,3"' if s.dashed else ""
        out.append(f'<polyline class="line" points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>')
        ly = MARGIN["top"] + 14 * (i + 1)
        lx = WIDTH - MARGIN["right"] + 10
        out.append(f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 18}" y2="{ly - 4}" stroke="{color}"{dash}/>')
        out.append(f'<text x="{lx + 22}" y="{ly}" font-size="10">{_esc(s.label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _esc(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def runtime_series(tables: list[csvio.Table]) -> list[Series]:
    """Wall time per training step, mean +- 1 sd across seeds, one curve per solver setting.

    Step 0 is dropped. Seeds are grouped by the (solver, dt, t_max, hidden_layers)
    metadata; a single seed gives a zero-width band.
    """
    groups: dict[tuple, list[dict[int, float]]] = {}
    for t in tables:
        key = tuple(t.meta.get(k, "?") for k in ("solver", "dt", "t_max", "hidden_layers"))
        per_step = {}
        for row in t.rows:
            wall = csvio.parse_float(t, row, "wall_ms")
            if wall is None:
                continue  # accuracy row
            step = int(csvio.parse_float(t, row, "step"))
            if step >= 1:
                per_step[step] = wall
        groups.setdefault(key, []).append(per_step)
    series = []
    for (solver, dt, t_max, depth), runs in sorted(groups.items()):
        steps = sorted(set.intersection(*(set(r) for r in runs)))
        if not steps:
            continue
        vals = np.array([[r[s] for s in steps] for r in runs])
        mean = vals.mean(axis=0)
        sd = vals.std(axis=0, ddof=1) if len(runs) > 1 else np.zeros_like(mean)
        label = f"{solver} dt={dt} T={t_max} H={depth}"
        series.append(Series(label, np.array(steps, float), mean, mean - sd, mean + sd))
    return series


def theory_series(table: csvio.Table) -> list[Series]:
    """Numerical (solid) and theoretical (dashed) energy per step, one pair per t_max."""
    by_t: dict[float, list[tuple[int, float, float]]] = {}
    for row in table.rows:
        t = csvio.parse_float(table, row, "t_max")
        by_t.setdefault(t, []).append(
            (
                int(csvio.parse_float(table, row, "step")),
                csvio.parse_float(table, row, "numerical_energy"),
                csvio.parse_float(table, row, "theory_energy"),
            )
        )
    series = []
    for t in sorted(by_t):
        pts = sorted(by_t[t])
        x = np.array([p[0] for p in pts], float)
        series.append(Series(f"numerical t={t:g}", x, np.array([p[1] for p in pts])))
        series.append(Series(f"theory t={t:g}", x, np.array([p[2] for p in pts]), dashed=True))
    return series


def plot_files(paths: list[str | Path], out_dir: str | Path) -> list[Path]:
    """Render every CSV; run CSVs are pooled into one runtime figure."""
    if not paths:
        raise PlotError("no input CSVs given")
    out_dir = Path(out_dir)
    runs, written = [], []
    for p in paths:
        table = csvio.read_table(p)
        if table.kind == "run":
            runs.append(csvio.read_table(p, csvio.RUN_COLUMNS))
        elif table.kind == "theory":
            table = csvio.read_table(p, csvio.THEORY_COLUMNS)
            svg = render_svg(theory_series(table), "Energy at the end of inference", "training step", "energy")
            target = out_dir / (Path(p).stem + ".svg")
            csvio.write_atomic(target, svg)
            written.append(target)
        else:
            raise PlotError(f"{p}: cannot plot CSV of kind {table.kind!r}")
    if runs:
        svg = render_svg(runtime_series(runs), "Wall time per training step", "training step", "wall time (ms)")
        target = out_dir / "runtime.svg"
        csvio.write_atomic(target, svg)
        written.append(target)
    return written
