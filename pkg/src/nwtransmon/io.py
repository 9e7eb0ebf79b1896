"""Plot-ready CSV/JSON reading and writing.

CSV dialect: comma separated, '.' decimal point, one header row of
unit-suffixed column names. Floats are written with the shortest repr that
round-trips, so re-reading a file reproduces the numbers bit for bit.
"""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigError

__all__ = ["DatasetError", "format_number", "write_csv", "read_csv", "to_jsonable", "write_json"]


class DatasetError(ConfigError):
    """Malformed dataset file; the message carries the offending line number."""


def format_number(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(x)


def write_csv(path, columns: Mapping[str, Sequence]) -> Path:
    path = Path(path)
    names = list(columns)
    cols = [np.asarray(columns[n]) for n in names]
    lengths = {c.shape[0] for c in cols}
    if len(lengths) > 1:
        raise ValueError(f"columns have different lengths: {sorted(lengths)}")
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for row in zip(*cols):
            w.writerow([format_number(v) for v in row])
    return path


def read_csv(path, required: Sequence[str] = (), optional: Sequence[str] = ()) -> dict[str, np.ndarray]:
    """Read a numeric CSV into float columns.

    Unknown columns are rejected when ``required`` or ``optional`` is given.
    """
    path = Path(path)
    try:
        fh = path.open(newline="")
    except OSError as exc:
        raise DatasetError(f"{path}: cannot open ({exc.strerror})") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DatasetError(f"{path}:1: empty file") from None
        missing = [c for c in required if c not in header]
        if missing:
            raise DatasetError(f"{path}:1: missing column(s) {', '.join(missing)}")
        if required or optional:
            extra = [c for c in header if c not in required and c not in optional]
            if extra:
                raise DatasetError(f"{path}:1: unexpected column(s) {', '.join(extra)}")
        if len(set(header)) != len(header):
            raise DatasetError(f"{path}:1: duplicate column names")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise DatasetError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                rows.append([float(cell) for cell in row])
            except ValueError:
                raise DatasetError(f"{path}:{lineno}: non-numeric field in {row!r}") from None
    if not rows:
        raise DatasetError(f"{path}: no data rows")
    data = np.array(rows, dtype=float)
    return {name: data[:, i].copy() for i, name in enumerate(header)}


def to_jsonable(obj):
    if isinstance(obj, Mapping):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        # JSON has no inf/nan; keep the file strictly parseable
        return x if math.isfinite(x) else str(x)
    return obj


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(json.dumps(to_jsonable(obj), indent=2, sort_keys=True) + "\n")
    return path
