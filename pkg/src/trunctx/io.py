"""Portable text formats: operators (JSON header + CSV matrix), fields and control results.

Floats are written with ``repr`` so every value round-trips exactly, and all
CSV files use the ``csv`` module defaults (RFC 4180 quoting, CRLF line ends).
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .grids import Grid
from .operators import OpMatrix, StackedOp

__all__ = [
    "export_operator",
    "import_operator",
    "write_csv",
    "read_csv",
    "write_control_result",
    "write_json",
]

FORMAT = "trunctx-operator/1"


def _num(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(list(header))
        for row in rows:
            w.writerow([_num(v) for v in row])
    return path


def read_csv(path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValidationError(f"{path} is empty")
    body = [[float(v) if v != "" else np.nan for v in r] for r in rows[1:]]
    return rows[0], np.asarray(body, dtype=float).reshape(len(body), len(rows[0]))


def write_json(path, data) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")
    return path


def _op_header(op: OpMatrix) -> dict:
    return {"kind": op.kind, "axis": op.axis, "adjoint": op.adjoint,
            "source": op.source.to_dict(), "target": op.target.to_dict(),
            "shape": list(op.entries.shape)}


def export_operator(op, path) -> tuple[Path, Path]:
    """Write ``<path>.json`` (grids, kind) and ``<path>.csv`` (matrix rows).

    A stacked operator stores its components one after another in the CSV;
    the header lists their shapes.
    """
    base = Path(path)
    if base.suffix in (".json", ".csv"):
        base = base.with_suffix("")
    json_path, csv_path = base.with_suffix(".json"), base.with_suffix(".csv")
    if isinstance(op, StackedOp):
        comps = list(op.components)
        header = {"format": FORMAT, "stacked": True, "adjoint": op.adjoint,
                  "components": [_op_header(c) for c in comps]}
    else:
        comps = [op]
        header = {"format": FORMAT, "stacked": False, **_op_header(op)}
    header["payload"] = csv_path.name
    ncols = comps[0].entries.shape[1]
    rows = (row for c in comps for row in c.entries)
    write_csv(csv_path, [f"c{k}" for k in range(ncols)], rows)
    write_json(json_path, header)
    return json_path, csv_path


def _op_from(header: dict, entries: np.ndarray) -> OpMatrix:
    return OpMatrix(entries, Grid.from_dict(header["source"]), Grid.from_dict(header["target"]),
                    header["kind"], header.get("axis"), bool(header.get("adjoint", False)))


def import_operator(path):
    """Inverse of :func:`export_operator`; ``path`` may name the JSON file or the stem."""
    json_path = Path(path)
    if json_path.suffix != ".json":
        json_path = json_path.with_suffix(".json")
    with open(json_path, encoding="utf-8") as fh:
        header = json.load(fh)
    if header.get("format") != FORMAT:
        raise ValidationError(f"{json_path} is not a {FORMAT} header")
    _, matrix = read_csv(json_path.parent / header["payload"])
    if not header["stacked"]:
        if list(matrix.shape) != header["shape"]:
            raise ValidationError("payload shape does not match the header")
        return _op_from(header, matrix)
    comps, start = [], 0
    for h in header["components"]:
        m = h["shape"][0]
        comps.append(_op_from(h, matrix[start:start + m]))
        start += m
    if start != matrix.shape[0]:
        raise ValidationError("payload rows do not match the component shapes")
    return StackedOp(tuple(comps), adjoint=bool(header.get("adjoint", False)))


def _fn_rows(name: str, component: int, fn):
    for p, v in zip(fn.grid.nodes, fn.values):
        coords = list(p) + [None] * (2 - len(p))
        yield [name, component, *coords, v]


def write_control_result(result, json_path, csv_path, extra: dict | None = None):
    """Norms and multiplier as JSON; samples of the minimizer and controls as CSV."""
    data = result.to_dict()
    if extra:
        data.update(extra)
    write_json(json_path, data)
    rows = list(_fn_rows("g", 0, result.g))
    for k, f in enumerate(result.controls, start=1):
        rows.extend(_fn_rows("f", k, f))
    write_csv(csv_path, ["field", "component", "x1", "x2", "value"], rows)
    return Path(json_path), Path(csv_path)
