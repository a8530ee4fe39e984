"""CSV files with a '#'-prefixed metadata block, as written by the bench CLI.

Layout::

    # kind: run
    # key: value
    ...
    col_a,col_b,...
    1,2,...

Values are written with ``repr`` so floats round-trip exactly.
"""

from __future__ import annotations

import csv
import io
import os
import subprocess
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

from .errors import CsvFormatError

RUN_COLUMNS = ["step", "wall_ms", "energy", "rhs_evals", "accepted", "rejected", "test_acc"]
THEORY_COLUMNS = ["t_max", "step", "theory_energy", "numerical_energy", "gap", "test_acc"]
GRID_COLUMNS = ["solver", "depth", "dt", "t_max", "seed", "test_acc", "mean_wall_ms", "mean_rhs_evals", "status"]
SUMMARY_COLUMNS = ["solver", "depth", "dt", "t_max", "n_seeds", "n_failed", "mean_acc", "sd_acc"]


@dataclass
class Table:
    meta: dict[str, str]
    columns: list[str]
    rows: list[dict[str, str]] = field(default_factory=list)
    path: Path | None = None
    line_numbers: list[int] = field(default_factory=list)

    @property
    def kind(self) -> str:
        return self.meta.get("kind", "")


def fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def render(meta: dict, columns: list[str], rows: list[dict]) -> str:
    buf = io.StringIO()
    for k, v in meta.items():
        buf.write(f"# {k}: {v}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([fmt(row.get(c)) for c in columns])
    return buf.getvalue()


def write_atomic(path: str | Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_table(path, meta: dict, columns: list[str], rows: list[dict]) -> None:
    write_atomic(path, render(meta, columns, rows))


def read_table(path: str | Path, required: list[str] | None = None) -> Table:
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except UnicodeDecodeError as exc:
        raise CsvFormatError("not a text file", path) from exc
    meta: dict[str, str] = {}
    i = 0
    while i < len(lines) and lines[i].startswith("#"):
        key, sep, value = lines[i][1:].partition(":")
        if not sep:
            raise CsvFormatError("metadata line lacks 'key: value'", path, i + 1)
        meta[key.strip()] = value.strip()
        i += 1
    if i >= len(lines):
        raise CsvFormatError("missing column header", path, i + 1)
    columns = next(csv.reader([lines[i]]))
    if required:
        missing = [c for c in required if c not in columns]
        if missing:
            raise CsvFormatError(f"missing columns {missing}", path, i + 1)
    table = Table(meta, columns, path=path)
    for lineno, line in enumerate(lines[i + 1 :], start=i + 2):
        if not line.strip():
            continue
        values = next(csv.reader([line]))
        if len(values) != len(columns):
            raise CsvFormatError(f"expected {len(columns)} fields, got {len(values)}", path, lineno)
        table.rows.append(dict(zip(columns, values)))
        table.line_numbers.append(lineno)
    return table


def parse_float(table: Table, row: dict, col: str) -> float | None:
    raw = row.get(col, "")
    if raw == "":
        return None
    try:
        return float(raw)
    except ValueError:
        line = next((n for r, n in zip(table.rows, table.line_numbers) if r is row), None)
        raise CsvFormatError(f"column {col!r}: {raw!r} is not a number", table.path, line) from None


def git_describe() -> str:
    """``git describe --always --dirty`` of the source tree, or 'unknown'."""
    here = Path(__file__).resolve().parent
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            cwd=here,
            capture_output=True,
            text=True,
            timeout=10,
        )
    except (OSError, subprocess.SubprocessError):
        return "unknown"
    return out.stdout.strip() or "unknown"
