"""Per-step trajectory diagnostics and their CSV serialization."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, fields
from typing import Iterable, Sequence

import numpy as np

COLUMNS = ("k", "t", "q", "v", "S", "T", "U", "E", "rel_energy_err")


@dataclass(frozen=True, slots=True)
class TrajectoryRecord:
    """Diagnostics for one step.

    ``v`` is the discrete velocity ``(q_{k+1} - q_k) / h`` for the variational
    schemes and the state velocity for the continuous reference; ``U`` is the
    internal energy.
    """

    k: int
    t: float
    q: object
    v: object
    S: float
    T: float
    U: float
    E: float
    rel_energy_err: float


def relative_error(E: float, E0: float) -> float:
    return abs(E - E0) / abs(E0)


def columns(records: Sequence[TrajectoryRecord]) -> dict[str, np.ndarray]:
    """Column-wise numpy view of a record list."""
    names = [f.name for f in fields(TrajectoryRecord)]
    out = {}
    for name in names:
        out[name] = np.array([getattr(r, name) for r in records])
    return out


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, np.ndarray):
        return ";".join(_fmt(float(v)) for v in x)
    # 17 significant digits round-trips every double
    return format(float(x), ".17g")


def write_csv(records: Iterable[TrajectoryRecord], stream) -> int:
    """Write records with the fixed column order; returns the row count."""
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(COLUMNS)
    n = 0
    for r in records:
        writer.writerow([_fmt(getattr(r, c)) for c in COLUMNS])
        n += 1
    return n


def to_csv_string(records: Iterable[TrajectoryRecord]) -> str:
    buf = io.StringIO()
    write_csv(records, buf)
    return buf.getvalue()
