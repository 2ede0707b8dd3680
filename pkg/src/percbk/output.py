"""Versioned CSV tables and hashed JSON manifests."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from datetime import datetime, timezone
from pathlib import Path

CSV_HEADER = "# perc-bk csv v1"
HASH_COLUMN = "manifest_hash"


def canonical_json(data) -> str:
    return json.dumps(data, sort_keys=True, separators=(",", ":"), allow_nan=False)


def digest(data) -> str:
    return hashlib.sha256(canonical_json(data).encode()).hexdigest()[:16]


def make_manifest(command: str, params: dict) -> dict:
    body = {"command": command, "params": params}
    return {**body, "hash": digest(body)}


def write_manifest(path, manifest: dict) -> Path:
    """The timestamp sits outside the hashed body."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = dict(manifest, created=datetime.now(timezone.utc).isoformat(timespec="seconds"))
    path.write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")
    return path


def read_manifest(path) -> dict:
    doc = json.loads(Path(path).read_text())
    if "command" not in doc or "params" not in doc:
        raise ValueError(f"{path} is not an experiment manifest")
    body = {"command": doc["command"], "params": doc["params"]}
    h = digest(body)
    if "hash" in doc and doc["hash"] != h:
        raise ValueError(f"manifest hash mismatch in {path}: stored {doc['hash']}, computed {h}")
    return {**body, "hash": h}


def _cell(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        return repr(v)
    if v is None:
        return ""
    if hasattr(v, "item"):
        return _cell(v.item())
    return str(v)


def render_csv(columns, rows, manifest_hash: str) -> str:
    buf = io.StringIO()
    buf.write(CSV_HEADER + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(list(columns) + [HASH_COLUMN])
    for row in rows:
        w.writerow([_cell(row.get(c)) for c in columns] + [manifest_hash])
    return buf.getvalue()


def write_csv(path, columns, rows, manifest_hash: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(render_csv(columns, rows, manifest_hash))
    return path


def read_csv(path) -> tuple[list[str], list[dict]]:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != CSV_HEADER:
        raise ValueError(f"{path} lacks the '{CSV_HEADER}' header")
    reader = csv.DictReader(lines[1:])
    rows = list(reader)
    return list(reader.fieldnames or []), rows


def write_xy(path, xs, ys, header: str) -> Path:
    """Two-column whitespace-separated data for external plotting tools."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    body = "".join(f"{_cell(float(x))} {_cell(float(y))}\n" for x, y in zip(xs, ys))
    path.write_text(f"# {header}\n" + body)
    return path
