"""Text file formats: event CSV, matrix CSV and run manifests."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
from pathlib import Path

import numpy as np

from tppg.core import EventData


class DataFormatError(ValueError):
    pass


def format_events(data: EventData) -> str:
    """``node_id,time`` rows sorted by time (ties by node), 9-decimal times."""
    nodes = np.concatenate([np.full(len(s), j) for j, s in enumerate(data.streams)] or [[]]).astype(int)
    times = np.concatenate([s.times for s in data.streams] or [[]])
    order = np.lexsort((nodes, times))
    lines = ["node_id,time"]
    lines += [f"{n},{t:.9f}" for n, t in zip(nodes[order], times[order])]
    return "\n".join(lines) + "\n"


def parse_events(text: str, p: int | None, horizon: float) -> EventData:
    """Read ``node_id,time`` rows; ``p=None`` infers p from the largest node id."""
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or [c.strip() for c in rows[0]] != ["node_id", "time"]:
        raise DataFormatError("event file must start with the header 'node_id,time'")
    per_node: dict[int, list[float]] = {}
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or not "".join(row).strip():
            continue
        if len(row) != 2:
            raise DataFormatError(f"line {lineno}: expected 2 fields, got {len(row)}")
        try:
            j, t = int(row[0]), float(row[1])
        except ValueError as exc:
            raise DataFormatError(f"line {lineno}: {exc}") from None
        if j < 0 or (p is not None and j >= p):
            raise DataFormatError(f"line {lineno}: node id {j} outside [0, {p})")
        if not 0 <= t <= horizon:
            raise DataFormatError(f"line {lineno}: time {t} outside [0, {horizon}]")
        times = per_node.setdefault(j, [])
        if times and t <= times[-1]:
            raise DataFormatError(f"line {lineno}: times of node {j} are not strictly increasing")
        times.append(t)
    if p is None:
        p = max(per_node, default=-1) + 1
        if p == 0:
            raise DataFormatError("cannot infer p from an empty event file")
    return EventData(tuple(np.array(per_node.get(j, []), dtype=float) for j in range(p)), horizon)


def read_events(path, p: int | None, horizon: float) -> EventData:
    return parse_events(Path(path).read_text(), p, horizon)


def format_matrix(A) -> str:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    return "".join(",".join(repr(float(v)) for v in row) + "\n" for row in A)


def read_matrix(path) -> np.ndarray:
    rows = [r for r in csv.reader(Path(path).read_text().splitlines()) if r]
    try:
        A = np.array([[float(v) for v in r] for r in rows])
    except ValueError as exc:
        raise DataFormatError(f"{path}: {exc}") from None
    if A.ndim != 2:
        raise DataFormatError(f"{path}: rows have unequal length")
    return A


def sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def write_outputs(files: dict, manifest: dict | None = None, manifest_path=None) -> dict:
    """Write ``{path: text}`` and an optional manifest recording their digests.

    Each file goes to a temporary name first and is renamed into place, so a
    failure never leaves a half-written artifact.
    """
    digests = {}
    for path, text in files.items():
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        data = text.encode()
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_bytes(data)
        os.replace(tmp, path)
        digests[str(path)] = sha256(data)
    if manifest is not None:
        manifest = dict(manifest, outputs=digests)
        Path(manifest_path).write_text(json.dumps(manifest, indent=2, sort_keys=True, default=_jsonable) + "\n")
    return digests


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n"
