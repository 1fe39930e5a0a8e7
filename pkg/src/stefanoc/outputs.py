"""Deterministic CSV and JSON writers.

Floats are written with 17 significant digits so values round-trip exactly.
CSV files may start with a single ``#`` line carrying a timestamp; readers
and comparisons skip it.
"""

from __future__ import annotations

import csv
import datetime as _dt
import json
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

__all__ = ["format_value", "write_csv", "read_csv", "write_json", "controls_rows", "state_rows"]


def format_value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "%.17g" % float(v)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence], timestamp: bool = True) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        if timestamp:
            now = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
            fh.write(f"# generated {now}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([format_value(v) for v in row])
    return path


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.reader(lines)
    header = next(reader)
    return header, list(reader)


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    # json writes floats with repr, which round-trips exactly
    text = json.dumps(_plain(obj), indent=2, sort_keys=True, allow_nan=True)
    path.write_text(text + "\n")
    return path


def controls_rows(dc):
    for k, (t, s, g) in enumerate(zip(dc.times, dc.s_vals, dc.g_vals)):
        yield k, t, s, g


def state_rows(dsv):
    times = dsv.control.times
    for sl in dsv.slices:
        for i, (x, u) in enumerate(zip(sl.nodes, sl.nodal)):
            yield sl.k, times[sl.k], i, x, u
