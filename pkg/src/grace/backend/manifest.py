"""Program manifests."""
from __future__ import annotations

import json
from pathlib import Path

from .simulated import load_fixture


def load_manifest(path: str | Path) -> list[tuple[str, object]]:
    """(id, source) pairs from a JSON manifest.

    LLVM entries carry ``path`` (relative to the manifest); simulated entries
    carry ``counters``/``flags``. A manifest may instead name a fixture split:
    ``{"fixture": "sim12", "split": "test"}``.
    """
    path = Path(path)
    data = json.loads(path.read_text())
    if "fixture" in data:
        progs = load_fixture(data["fixture"])["programs"][data.get("split", "train")]
        return [(d["id"], d) for d in progs]
    out = []
    for i, entry in enumerate(data["programs"]):
        if "id" not in entry:
            raise ValueError(f"programs[{i}]: missing id")
        if "path" in entry:
            p = Path(entry["path"])
            out.append((entry["id"], str(p if p.is_absolute() else path.parent / p)))
        else:
            out.append((entry["id"], entry))
    return out
