"""Deterministic JSON/CSV artifacts."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

SCHEMA_VERSION = 1

__all__ = ["SCHEMA_VERSION", "to_plain", "emit_report", "write_csv", "trajectory_table"]


def to_plain(obj):
    """Convert numpy containers and scalars to JSON-ready Python objects."""
    if isinstance(obj, dict):
        return {str(k): to_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_plain(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if np.isfinite(v) else None
    return obj


def write_csv(path: Path, header: list[str], rows: np.ndarray) -> Path:
    """Comma-separated, LF line endings, full double precision."""
    rows = np.atleast_2d(np.asarray(rows, dtype=float)) if len(rows) else np.empty((0, len(header)))
    lines = [",".join(header)]
    lines += [",".join(format(v, ".17g") for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")
    return path


def trajectory_table(grid, y, z, u, prefix: str = ""):
    """Header and rows (s, y_1..y_d, z_1..z_d, u_1..u_p)."""
    y, z, u = (np.asarray(a, dtype=float).reshape(len(grid), -1) for a in (y, z, u))
    header = (["s"] + [f"{prefix}y_{i + 1}" for i in range(y.shape[1])]
              + [f"{prefix}z_{i + 1}" for i in range(z.shape[1])]
              + [f"{prefix}u_{i + 1}" for i in range(u.shape[1])])
    rows = np.column_stack([np.asarray(grid, dtype=float), y, z, u])
    return header, rows


def emit_report(out_dir, stem: str, report: dict | None = None,
                tables: dict[str, tuple[list[str], np.ndarray]] | None = None) -> list[Path]:
    """Write ``<stem>.json`` and one ``<stem>_<name>.csv`` per table.

    The JSON always carries ``schema`` first; field order follows insertion
    order so identical runs produce identical bytes.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    payload = {"schema": SCHEMA_VERSION}
    payload.update(to_plain(report or {}))
    paths = []
    jpath = out / f"{stem}.json"
    jpath.write_text(json.dumps(payload, indent=2, allow_nan=False) + "\n", encoding="utf-8",
                     newline="\n")
    paths.append(jpath)
    for name, (header, rows) in (tables or {}).items():
        paths.append(write_csv(out / f"{stem}_{name}.csv", header, rows))
    return paths
