"""CSV and JSON serialization helpers.

All CSVs carry a header row and a trailing ``config_hash`` column, use '.'
decimals and '\\n' line endings, and are byte-identical across reruns with
the same config and seed (timing data goes to separate files).
"""

from __future__ import annotations

import csv
import json
import os


def write_csv(path: str, header: list[str], rows: list[list], config_hash: str):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header + ["config_hash"])
        for row in rows:
            writer.writerow([_fmt(v) for v in row] + [config_hash])


def write_json(path: str, payload: dict):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=_jsonable)
        fh.write("\n")


def _fmt(value):
    if isinstance(value, float):
        return repr(value)
    return value


def _jsonable(obj):
    try:
        return obj.tolist()
    except AttributeError:
        return str(obj)
