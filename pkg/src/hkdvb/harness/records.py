"""Run records and their JSON-lines / CSV encodings.

JSON-lines output is canonical: keys sorted, floats printed with 17
significant digits, non-finite floats as ``null``.  Wall-clock time lives
in a ``.meta.json`` sidecar so that deterministic runs give byte-identical
record files.
"""
from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .. import __version__
from ..model import SimConfig
from .configfile import config_snapshot

SCHEMA_VERSION = 1
BUILD_ID = f"hkdvb-{__version__}"
SERIES_HEADER = ("time", "series_name", "value")


@dataclass
class RunRecord:
    command: str
    config: dict
    outputs: list = field(default_factory=list)
    wall_time: float = 0.0
    schema_version: int = SCHEMA_VERSION
    build: str = BUILD_ID


def make_record(command: str, config: SimConfig | None, kind: str, name: str, data) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "build": BUILD_ID,
        "command": command,
        "config": config_snapshot(config) if config is not None else None,
        "kind": kind,
        "name": name,
        "data": data,
    }


def _encode(obj) -> str:
    if obj is None:
        return "null"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return "%.17g" % v if math.isfinite(v) else "null"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        items = sorted((str(k), v) for k, v in obj.items())
        return "{" + ",".join(f"{json.dumps(k)}:{_encode(v)}" for k, v in items) + "}"
    if isinstance(obj, np.ndarray):
        return _encode(obj.tolist())
    if isinstance(obj, (list, tuple)):
        return "[" + ",".join(_encode(v) for v in obj) + "]"
    raise TypeError(f"cannot encode {type(obj).__name__}")


def dumps_record(record) -> str:
    """Canonical single-line JSON text of a record."""
    return _encode(record)


def _series_rows(records):
    for rec in records:
        if rec.get("kind") != "series":
            continue
        data = rec["data"]
        times = data["time"]
        for name in sorted(data["series"]):
            for t, v in zip(times, data["series"][name]):
                yield (t, name, v)


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return "%.17g" % float(v)
    if isinstance(v, (dict, list, tuple)):
        return _encode(v)
    return v


def write_records(records, fmt: str, out_dir, stem: str, wall_time: float | None = None):
    """Write records as ``jsonl``, ``csv`` or ``both``; returns the written paths."""
    if fmt not in ("jsonl", "csv", "both"):
        raise ValueError(f"unknown format {fmt!r}")
    records = list(records)
    paths = []
    try:
        os.makedirs(out_dir, exist_ok=True)
        if fmt in ("jsonl", "both"):
            path = os.path.join(out_dir, f"{stem}.jsonl")
            with open(path, "w", encoding="utf-8", newline="\n") as fh:
                for rec in records:
                    fh.write(dumps_record(rec) + "\n")
            paths.append(path)
        if fmt in ("csv", "both"):
            path = os.path.join(out_dir, f"{stem}.csv")
            with open(path, "w", encoding="utf-8", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(SERIES_HEADER)
                for row in _series_rows(records):
                    w.writerow([_cell(v) for v in row])
            paths.append(path)
            for rec in records:
                if rec.get("kind") != "table":
                    continue
                rows = rec["data"]["rows"]
                cols = sorted({k for r in rows for k in r})
                tpath = os.path.join(out_dir, f"{stem}-{rec['name']}.csv")
                with open(tpath, "w", encoding="utf-8", newline="") as fh:
                    w = csv.writer(fh, lineterminator="\n")
                    w.writerow(cols)
                    for r in rows:
                        w.writerow([_cell(r.get(c, "")) for c in cols])
                paths.append(tpath)
        if wall_time is not None:
            meta = os.path.join(out_dir, f"{stem}.meta.json")
            with open(meta, "w", encoding="utf-8") as fh:
                fh.write(_encode({"wall_time": wall_time, "schema_version": SCHEMA_VERSION}) + "\n")
            paths.append(meta)
    except OSError as exc:
        raise OSError(f"writing records under {out_dir}: {exc}") from exc
    return paths
