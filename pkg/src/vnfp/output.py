"""CSV and manifest writers.

Floats are written with 17 significant digits, enough to read back the exact
double.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "DIAGNOSTICS_HEADER",
    "PROFILE_HEADER",
    "RunManifest",
    "fmt",
    "emit_csv",
    "write_rows",
    "read_rows",
    "write_manifest",
    "utc_now",
]

DIAGNOSTICS_HEADER = (
    "t", "mass", "l2", "first_moment", "energy", "energy_residual",
    "nonvanish_measure", "phi", "phidot",
)
PROFILE_HEADER = ("t", "q", "f")
_DIAG_ATTRS = (
    "t", "mass", "l2", "first_moment", "energy", "energy_residual",
    "nonvanish_measure", "phi", "phidot",
)


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def write_rows(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    try:
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([fmt(v) for v in row])
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write {path}: {exc.strerror}") from exc
    return path


def read_rows(path) -> tuple[list[str], np.ndarray]:
    """Header and float matrix of a numeric CSV written by :func:`write_rows`."""
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    header = rows[0]
    data = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float)
    return header, data.reshape(len(rows) - 1, len(header))


def emit_csv(traj, out_dir, *, prefix: str = "") -> list[Path]:
    """Write ``diagnostics.csv`` and ``profiles.csv`` for a trajectory.

    ``traj`` may be ``None`` for header-only files.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    records = traj.diagnostics if traj is not None else []
    snapshots = traj.snapshots if traj is not None else []
    diag = write_rows(
        out / f"{prefix}diagnostics.csv",
        DIAGNOSTICS_HEADER,
        ([getattr(r, a) for a in _DIAG_ATTRS] for r in records),
    )

    def profile_rows():
        for snap in snapshots:
            for q, f in zip(traj.grid.nodes, snap.values):
                yield (snap.t, q, f)

    prof = write_rows(out / f"{prefix}profiles.csv", PROFILE_HEADER, profile_rows())
    return [diag, prof]


def utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


@dataclass
class RunManifest:
    config_digest: str
    artifact_version: str
    started_at: str
    finished_at: str = ""
    output_files: list[str] = field(default_factory=list)
    command: str = ""
    config: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)


def write_manifest(manifest: RunManifest, out_dir) -> Path:
    path = Path(out_dir) / "manifest.json"
    payload = dict(manifest.__dict__)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path
