"""CSV/JSON writers with round-trippable, byte-stable number formatting."""

from __future__ import annotations

import csv
import hashlib
import json
import math

import numpy as np


def fmt(x) -> str:
    """17 significant digits, '.' decimal, no grouping."""
    if isinstance(x, (str, bytes)):
        return x
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        if isinstance(rows, np.ndarray) and rows.dtype.kind == "f":
            # same text as fmt: format() already spells nan and inf that way
            for row in rows.tolist():
                w.writerow([format(v, ".17g") for v in row])
            return
        for row in rows:
            w.writerow([fmt(v) for v in row])


def write_records(path, records, columns=None):
    """Write a list of dicts; columns default to the keys of the first record."""
    records = list(records)
    if columns is None:
        columns = list(records[0].keys()) if records else []
    write_csv(path, columns, ([r.get(c) for c in columns] for r in records))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    return obj


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()
