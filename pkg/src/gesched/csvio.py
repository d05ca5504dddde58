"""CSV output helpers: every file carries one metadata comment line (config
hash, seed) followed by a header row; floats are serialized with 17
significant digits so round-trips are exact."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Iterable, Sequence


def fmt(x) -> str:
    if isinstance(x, float):
        return format(x, ".17g")
    return str(x)


def config_hash(config_dict: dict) -> str:
    blob = json.dumps(config_dict, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def write_csv(path: Path | str, header: Sequence[str], rows: Iterable[Sequence],
              meta: dict | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = []
    if meta:
        lines.append("# " + " ".join(f"{k}={v}" for k, v in meta.items()))
    lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(fmt(x) for x in row))
    path.write_text("\n".join(lines) + "\n")
    return path


def table_rows(model, table) -> list[tuple]:
    """Flatten a (q, belief-index) table to (q, belief, value) rows."""
    rows = []
    for q in range(table.shape[0]):
        for bi in range(table.shape[1]):
            val = table[q, bi]
            val = int(val) if hasattr(val, "item") and table.dtype.kind in "iu" else float(val)
            rows.append((q, float(model.beliefs.points[bi]), val))
    return rows
