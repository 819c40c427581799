"""Output headers, config hashing and small CSV helpers shared by the CLI."""
from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ArgumentError


def canonical_json(config) -> str:
    return json.dumps(config, sort_keys=True, separators=(",", ":"), default=_jsonable)


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, Path):
        return str(v)
    raise TypeError(f"not JSON serializable: {type(v).__name__}")


def config_hash(config) -> str:
    """First 16 hex digits of the SHA-256 of the canonical JSON form."""
    return hashlib.sha256(canonical_json(config).encode()).hexdigest()[:16]


def header_text(config, seed: int | None = None, command: str | None = None) -> str:
    """Comment block written at the top of every output file."""
    lines = [f"# viscobeam {__version__}"]
    if command:
        lines.append(f"# command: {command}")
    lines.append(f"# config_hash: {config_hash(config)}")
    lines.append(f"# seed: {'none' if seed is None else int(seed)}")
    return "\n".join(lines) + "\n"


def read_table(path) -> tuple[list[str], np.ndarray]:
    """Comma-separated table with '#' comment lines and one row of column names."""
    rows = [ln.strip() for ln in Path(path).read_text().splitlines() if ln.strip() and not ln.startswith("#")]
    if not rows:
        raise ArgumentError(f"{path}: no column header")
    names = [s.strip() for s in rows[0].split(",")]
    if len(rows) == 1:
        return names, np.zeros((0, len(names)))
    try:
        data = np.array([[float(v) for v in r.split(",")] for r in rows[1:]])
    except ValueError as exc:
        raise ArgumentError(f"{path}: non-numeric entry ({exc})") from None
    if data.shape[1] != len(names):
        raise ArgumentError(f"{path}: rows do not match the header")
    return names, data


def write_table(path, names, rows, header: str | None = None) -> None:
    with open(path, "w") as fh:
        if header:
            fh.write(header)
        fh.write(",".join(names) + "\n")
        for r in rows:
            fh.write(",".join(f"{float(v):.12g}" for v in r) + "\n")


def write_json(path, payload, header_info: dict | None = None) -> None:
    """JSON output; the header fields live under a leading "_header" key."""
    doc = {"_header": header_info} if header_info else {}
    doc.update(payload)
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True, default=_jsonable) + "\n")
