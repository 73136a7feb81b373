"""Synthetic generators and CSV ingestion for the workbench models."""

from __future__ import annotations

import csv
import math
from typing import Dict, List, Optional, Sequence

import numpy as np

from ..random import RngState

Table = Dict[str, np.ndarray]


class DataError(ValueError):
    """Unreadable or malformed data; the CLI exits with status 3."""


# -- synthetic generators ---------------------------------------------------------

GENERATOR_DEFAULTS: Dict[str, Dict[str, float]] = {
    "linear": {"a": 1.5, "b": -2.0, "sigma": 0.5, "n": 200, "xmin": -3.0, "xmax": 3.0},
    "hetero": {"a": 1.5, "b": -2.0, "s0": 0.1, "s1": 0.5, "n": 200, "xmin": -3.0, "xmax": 3.0},
    "branching": {"w": 0.5, "noise": 0.5, "n": 100, "xmin": 0.0, "xmax": 2.0},
    "blobs": {"n": 200, "sep": 3.0, "spread": 1.0},
}


def parse_synthetic(spec: Optional[str], generator: str) -> Dict[str, float]:
    """``"a=1.5,b=-2,n=200"`` over the generator's defaults."""
    params = dict(GENERATOR_DEFAULTS[generator])
    if not spec:
        return params
    for item in spec.split(","):
        item = item.strip()
        if not item:
            continue
        if "=" not in item:
            raise DataError(f"synthetic spec item {item!r} is not key=value")
        key, value = (s.strip() for s in item.split("=", 1))
        if key not in params:
            raise DataError(f"unknown synthetic key {key!r} for {generator} data; known: {', '.join(params)}")
        try:
            params[key] = float(value)
        except ValueError:
            raise DataError(f"synthetic key {key!r}: {value!r} is not a number") from None
    if params["n"] < 1 or params["n"] != int(params["n"]):
        raise DataError("synthetic n must be a positive integer")
    params["n"] = int(params["n"])
    return params


def generate(generator: str, params: Dict[str, float], rng: RngState) -> Table:
    n = int(params["n"])
    if generator == "blobs":
        label = (rng.uniform((n,)) < 0.5).astype(np.int64)
        centre = (2.0 * label - 1.0)[:, None] * (params["sep"] / 2.0)
        x = centre + params["spread"] * rng.normal((n, 2))
        return {"x1": x[:, 0], "x2": x[:, 1], "label": label}
    x = params["xmin"] + (params["xmax"] - params["xmin"]) * rng.uniform((n,))
    eps = rng.normal((n,))
    if generator == "linear":
        y = params["a"] + params["b"] * x + params["sigma"] * eps
    elif generator == "hetero":
        y = params["a"] + params["b"] * x + (params["s0"] + params["s1"] * np.abs(x)) * eps
    elif generator == "branching":
        y = x * math.exp(params["w"]) + params["noise"] * eps
    else:
        raise DataError(f"unknown generator {generator!r}")
    return {"x": x, "y": y}


# -- CSV --------------------------------------------------------------------------


def read_csv(path: str, required: Sequence[str], integer: Sequence[str] = ()) -> Table:
    """Read numeric columns, validating the header and every row.

    Numbers are parsed with ``float`` (dot decimal separator regardless of
    locale). Errors name the file and 1-based line number.
    """
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read data file {path!r}: {exc.strerror}") from None
    with fh:
        # provenance comments may precede the header
        reader = csv.reader(line for line in fh if not line.startswith("#"))
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        missing = [c for c in required if c not in header]
        if missing:
            raise DataError(
                f"{path}:1: missing columns {missing}; expected {list(required)}, found {header}"
            )
        if len(set(header)) != len(header):
            raise DataError(f"{path}:1: duplicate column names in {header}")
        index = {c: header.index(c) for c in required}
        columns: Dict[str, List[float]] = {c: [] for c in required}
        for lineno, row in enumerate(reader, 2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise DataError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            for c in required:
                cell = row[index[c]].strip()
                try:
                    v = float(cell)
                except ValueError:
                    raise DataError(f"{path}:{lineno}: column {c!r}: {cell!r} is not a number") from None
                if not math.isfinite(v):
                    raise DataError(f"{path}:{lineno}: column {c!r}: non-finite value {cell!r}")
                if c in integer and v != int(v):
                    raise DataError(f"{path}:{lineno}: column {c!r}: {cell!r} is not an integer")
                columns[c].append(v)
    if not columns[required[0]]:
        raise DataError(f"{path}: no data rows")
    return {
        c: np.array(v, dtype=np.int64 if c in integer else np.float64) for c, v in columns.items()
    }


def format_float(v: float) -> str:
    """Shortest round-tripping text; infinities as ``inf``/``-inf``."""
    return repr(float(v))


def write_csv(path: str, table: Table, columns: Sequence[str], comment: Optional[str] = None) -> None:
    n = len(table[columns[0]])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for i in range(n):
            row = []
            for c in columns:
                v = table[c][i]
                row.append(str(int(v)) if np.issubdtype(np.asarray(table[c]).dtype, np.integer) else format_float(v))
            w.writerow(row)
