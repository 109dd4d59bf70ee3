"""Small IO helpers shared across modules."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Union


def write_json(obj: dict, path: Union[str, Path]) -> None:
    """Deterministic JSON file: sorted keys, two-space indent, trailing newline."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def read_json(path: Union[str, Path]) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))
