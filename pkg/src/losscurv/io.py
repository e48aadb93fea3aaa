"""CSV and JSON writers.

CSV files start with one ``#`` comment line holding the resolved run config
as JSON, then a header row, then ``%.17g`` floats.  Read them back with
``pandas.read_csv(path, comment="#")`` or :func:`read_csv`.
"""

import json
import math
from pathlib import Path

import numpy as np


def fmt(value):
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return "%.17g" % float(value)


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    return obj


def write_csv(path, columns, config=None):
    """Write equal-length columns (a mapping name -> sequence) to ``path``."""
    path = Path(path)
    names = list(columns)
    data = [np.asarray(columns[n]).ravel() for n in names]
    lengths = {len(d) for d in data}
    if len(lengths) > 1:
        raise ValueError(f"column lengths differ: {sorted(lengths)}")
    with path.open("w", newline="") as fh:
        if config is not None:
            fh.write("# " + json.dumps(_plain(config), sort_keys=True) + "\n")
        fh.write(",".join(names) + "\n")
        for row in zip(*data):
            fh.write(",".join(fmt(v) for v in row) + "\n")
    return path


def read_csv(path):
    """Return (config, columns) from a file written by :func:`write_csv`."""
    config = None
    with Path(path).open() as fh:
        first = fh.readline()
        if first.startswith("#"):
            config = json.loads(first[1:])
            header = fh.readline()
        else:
            header = first
        names = header.strip().split(",")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    cols = {n: np.array([float(r[i]) for r in rows]) for i, n in enumerate(names)}
    return config, cols


def write_json(path, payload):
    path = Path(path)
    path.write_text(json.dumps(_plain(payload), indent=2, sort_keys=True) + "\n")
    return path
