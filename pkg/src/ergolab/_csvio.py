"""Byte-stable CSV/JSON output with config hashes.

All experiment outputs embed the configuration hash and master seed so that
runs are identifiable and reproducibility can be checked by byte comparison.
Floats are written with ``repr`` (shortest round-trip form), which is
deterministic across runs and platforms using IEEE-754 doubles.
"""

from __future__ import annotations

import hashlib
import json
import os
from typing import Mapping, Sequence

import numpy as np


def config_hash(config: Mapping) -> str:
    """Stable short hash of a flat key-value configuration."""
    lines = []
    for key in sorted(config):
        lines.append(f"{key}={_fmt(config[key])}")
    digest = hashlib.sha256("\n".join(lines).encode()).hexdigest()
    return digest[:16]


def _fmt(value) -> str:
    # numpy scalars repr with a type wrapper; unwrap to plain Python first
    if isinstance(value, np.floating):
        value = float(value)
    elif isinstance(value, np.integer):
        value = int(value)
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return "[" + ",".join(_fmt(v) for v in value) + "]"
    return str(value)


def write_csv(path: str, columns: Mapping[str, Sequence],
              meta: Mapping | None = None) -> None:
    """Write named columns with optional ``# key=value`` metadata lines."""
    names = list(columns)
    cols = [list(columns[k]) for k in names]
    n = len(cols[0]) if cols else 0
    for c in cols:
        if len(c) != n:
            raise ValueError("all columns must have equal length")
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        if meta:
            for key in sorted(meta):
                fh.write(f"# {key}={_fmt(meta[key])}\n")
        fh.write(",".join(names) + "\n")
        for i in range(n):
            fh.write(",".join(_fmt(col[i]) for col in cols) + "\n")


def read_csv(path: str):
    """Read back a write_csv file: (meta dict, column dict of float lists)."""
    meta: dict[str, str] = {}
    rows: list[list[str]] = []
    header: list[str] | None = None
    with open(path) as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line.startswith("# "):
                key, _, val = line[2:].partition("=")
                meta[key] = val
            elif header is None:
                header = line.split(",")
            elif line:
                rows.append(line.split(","))
    assert header is not None
    cols: dict[str, list] = {h: [] for h in header}
    for row in rows:
        for h, v in zip(header, row):
            try:
                cols[h].append(float(v))
            except ValueError:
                cols[h].append(v)
    return meta, cols


def write_json(path: str, obj) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")
