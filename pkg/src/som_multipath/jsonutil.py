"""Deterministic JSON serialization shared by artifact writers."""

from __future__ import annotations

import json
from pathlib import Path


def json_bytes(data: dict | list) -> bytes:
    """Canonical bytes: sorted keys, two-space indent, trailing newline."""
    return (json.dumps(data, sort_keys=True, indent=2) + "\n").encode("utf-8")


def write_json(path: str | Path, data: dict | list) -> None:
    Path(path).write_bytes(json_bytes(data))


def read_json(path: str | Path) -> dict | list:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)
