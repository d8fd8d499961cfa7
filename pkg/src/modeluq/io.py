"""Delimited-text measurement files and JSON reports.

Measurement files hold one row per (series, input) with the header
``series,input_index,q_realized,q_setpoint,s1,...,sN``. Indices are
1-based, forces are in newtons and displacements in micrometres; tensors
are kept in metres internally.
"""

from __future__ import annotations

import csv
import io
import json
import math
from decimal import Decimal
from pathlib import Path

import numpy as np

from .core import InputSchedule
from .errors import DataError, DimensionMismatch, MalformedRow, NonFiniteValue
from .estimation import MeasurementTensor, SensorLayout

SCHEMA_VERSION = "1"
FIXED_COLUMNS = ("series", "input_index", "q_realized", "q_setpoint")


def metres_to_um_text(x):
    """Micrometre text that converts back to exactly ``x`` metres."""
    return _plain(Decimal(repr(float(x))).scaleb(6))


def um_text_to_metres(text):
    return float(Decimal(text).scaleb(-6))


def _plain(d):
    s = format(d.normalize(), "f")
    return "0" if s in ("-0", "") else s


def infer_phases(setpoints):
    """Loading up to and including the largest setpoint, unloading after."""
    sp = np.asarray(setpoints, dtype=float)
    turn = int(np.argmax(sp))
    return ("loading",) * (turn + 1) + ("unloading",) * (sp.size - turn - 1)


def export_measurements(tensor, path=None):
    """Write ``tensor`` as delimited text; returns the text."""
    sp = tensor.schedule.setpoints
    if sp is None:
        sp = tensor.schedule.inputs[:, 0]
    realized = tensor.realized
    if realized is None:
        realized = np.broadcast_to(sp, tensor.z.shape[:2])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(FIXED_COLUMNS + tuple(f"s{k + 1}" for k in range(tensor.n_s)))
    for i in range(tensor.n_m):
        for j in range(tensor.n_q):
            w.writerow([i + 1, j + 1, repr(float(realized[i, j])), repr(float(sp[j]))]
                       + [metres_to_um_text(v) for v in tensor.z[i, j]])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def _number(text, line, column):
    try:
        value = float(text)
    except ValueError:
        msg = f"column {column!r} is not a number: {text!r}"
        raise MalformedRow(line=line, message=msg) from None
    if not math.isfinite(value):
        raise NonFiniteValue(f"line {line}: column {column!r} is not finite")
    return value


def ingest_measurements(path, layout=None, *, text=None):
    """Read a measurement file into a :class:`MeasurementTensor`.

    ``layout`` supplies sensor standard deviations; without it every sensor
    gets sigma 1 and the header names. Rows may come in any order but
    every (series, input) pair must appear exactly once.
    """
    if text is None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise DataError(f"cannot read measurements {path}: {exc}") from exc
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise MalformedRow(line=1, message="file is empty")
    header = [h.strip() for h in rows[0]]
    if tuple(header[:4]) != FIXED_COLUMNS or len(header) < 5:
        msg = f"header must start with {','.join(FIXED_COLUMNS)} and name sensors"
        raise MalformedRow(line=1, message=msg)
    sensors = header[4:]
    n_s = len(sensors)
    cells = {}
    for line, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header) or any(not c.strip() for c in row):
            raise MalformedRow(line=line, message=f"expected {len(header)} non-empty fields, got "
                               f"{sum(1 for c in row if c.strip())}")
        i, j = (int(_number(row[0], line, "series")), int(_number(row[1], line, "input_index")))
        if i < 1 or j < 1:
            raise MalformedRow(line=line, message="series and input indices start at 1")
        if (i, j) in cells:
            raise MalformedRow(line=line, message=f"duplicate row for series {i}, input {j}")
        q_real = _number(row[2], line, "q_realized")
        q_set = _number(row[3], line, "q_setpoint")
        values = []
        for name, cell in zip(sensors, row[4:]):
            try:
                v = um_text_to_metres(cell.strip())
            except Exception:
                msg = f"column {name!r} is not a number: {cell!r}"
                raise MalformedRow(line=line, message=msg) from None
            if not math.isfinite(v):
                raise NonFiniteValue(f"line {line}: column {name!r} is not finite")
            values.append(v)
        cells[(i, j)] = (q_real, q_set, values)
    if not cells:
        raise DimensionMismatch("no data rows")
    n_m = max(i for i, _ in cells)
    n_q = max(j for _, j in cells)
    if len(cells) != n_m * n_q:
        grid = {(i, j) for i in range(1, n_m + 1) for j in range(1, n_q + 1)}
        missing = sorted(grid - set(cells))
        raise DimensionMismatch(f"{len(cells)} rows for {n_m} series x {n_q} inputs; "
                                f"first missing (series, input) = {missing[0]}")
    z = np.empty((n_m, n_q, n_s))
    realized = np.empty((n_m, n_q))
    setpoints = np.array([cells[(1, j + 1)][1] for j in range(n_q)])
    for (i, j), (q_real, q_set, values) in cells.items():
        if q_set != setpoints[j - 1]:
            raise DimensionMismatch(f"series {i} has setpoint {q_set} at input {j}, "
                                    f"series 1 has {setpoints[j - 1]}")
        z[i - 1, j - 1] = values
        realized[i - 1, j - 1] = q_real
    if layout is None:
        layout = SensorLayout(np.ones(n_s), names=tuple(sensors))
    elif layout.n_s != n_s:
        raise DimensionMismatch(f"file has {n_s} sensors, layout expects {layout.n_s}")
    sched = InputSchedule(np.column_stack([setpoints, np.zeros(n_q)]), setpoints,
                          infer_phases(setpoints))
    return MeasurementTensor(z, sched, layout, realized)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    return obj


def dumps_report(doc):
    """Deterministic JSON text: sorted keys, fixed indentation, newline-terminated."""
    return json.dumps(_jsonable(doc), sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_report(doc, path):
    text = dumps_report(doc)
    Path(path).write_text(text)
    return text


def write_table(rows, header, path=None):
    """Plain delimited text for spreadsheet use."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text
