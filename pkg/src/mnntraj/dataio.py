"""Trajectory ingestion, resampling, splitting, and the trajectory database.

The CSV reader targets NGSIM-style exports: one row per (vehicle, frame)
with local x/y coordinates.  Column names are configurable through a schema
map because export headers vary; the default map matches the standard NGSIM
column names.  NGSIM distances are recorded in feet, so loads accept a unit
multiplier (`FEET_TO_METERS` for the ngsim profile, 1.0 for synthetic data).
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, DataError, SchemaError
from .pipeline import Trajectory

log = logging.getLogger(__name__)

FEET_TO_METERS = 0.3048

# column-name map for the standard NGSIM trajectory export
DEFAULT_SCHEMA = {
    "vehicle_id": "Vehicle_ID",
    "frame": "Frame_ID",
    "x": "Local_X",
    "y": "Local_Y",
}

MANIFEST_VERSION = 1


@dataclass
class TrajectoryDatabase:
    """Keyed collection of per-vehicle trajectories sharing one sample rate.

    Iteration order is sorted by vehicle id so downstream training is
    reproducible.  `meta` carries optional per-vehicle metadata (scenario
    parameters for synthetic fleets).
    """

    trajectories: dict[str, Trajectory]
    sample_rate_hz: float
    provenance: str = "replay"
    meta: dict[str, dict] = field(default_factory=dict)

    def __post_init__(self):
        if not self.sample_rate_hz > 0:
            raise DataError(f"sample_rate_hz must be > 0, got {self.sample_rate_hz}")
        for vid, traj in self.trajectories.items():
            if traj.sample_rate_hz != self.sample_rate_hz:
                raise DataError(
                    f"vehicle {vid!r} sampled at {traj.sample_rate_hz} Hz, "
                    f"database rate is {self.sample_rate_hz} Hz"
                )

    def vehicle_ids(self) -> list[str]:
        return sorted(self.trajectories)

    def __len__(self) -> int:
        return len(self.trajectories)

    def __iter__(self):
        for vid in self.vehicle_ids():
            yield self.trajectories[vid]

    def __getitem__(self, vid: str) -> Trajectory:
        return self.trajectories[vid]

    def subset(self, ids) -> "TrajectoryDatabase":
        ids = list(ids)
        return TrajectoryDatabase(
            trajectories={vid: self.trajectories[vid] for vid in ids},
            sample_rate_hz=self.sample_rate_hz,
            provenance=self.provenance,
            meta={vid: self.meta[vid] for vid in ids if vid in self.meta},
        )


@dataclass(frozen=True)
class SplitSpec:
    """By-vehicle train/test split; deterministic for a fixed seed."""

    test_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.test_fraction < 1.0:
            raise ConfigurationError(
                f"test_fraction must be in (0, 1), got {self.test_fraction}"
            )

    def to_dict(self) -> dict:
        return {"test_fraction": self.test_fraction, "seed": self.seed}

    @classmethod
    def from_dict(cls, d: dict) -> "SplitSpec":
        return cls(test_fraction=float(d.get("test_fraction", 0.2)), seed=int(d.get("seed", 0)))


def load_csv(
    path: str | Path,
    schema: dict | None = None,
    rate_hz: float = 10.0,
    unit_to_m: float = 1.0,
    provenance: str = "ngsim-csv",
    frame_step: int = 1,
) -> TrajectoryDatabase:
    """Read an NGSIM-shaped CSV into a trajectory database.

    Rows are grouped by vehicle and ordered by frame index.  A gap in the
    frame index (delta > frame_step) splits the vehicle into separate
    segments whose ids get a `#k` suffix.  Duplicate frames raise a
    `DataError` naming the offending row; segments too short to use are
    dropped with a logged diagnostic so every row is accounted for.
    """
    schema = dict(DEFAULT_SCHEMA, **(schema or {}))
    path = Path(path)
    if not path.exists():
        raise DataError(f"csv file not found: {path}")

    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise SchemaError(f"{path}: empty file, no header row")
        missing = [col for col in schema.values() if col not in reader.fieldnames]
        if missing:
            raise SchemaError(
                f"{path}: missing columns {missing}; available: {reader.fieldnames}"
            )
        rows_by_vehicle: dict[str, list[tuple[int, float, float, int]]] = {}
        for line_no, row in enumerate(reader, start=2):  # header is line 1
            vid = str(row[schema["vehicle_id"]]).strip()
            try:
                frame = int(float(row[schema["frame"]]))
                x = float(row[schema["x"]]) * unit_to_m
                y = float(row[schema["y"]]) * unit_to_m
            except (TypeError, ValueError) as exc:
                raise DataError(f"{path}:{line_no}: unparseable row ({exc})") from exc
            rows_by_vehicle.setdefault(vid, []).append((frame, x, y, line_no))

    trajectories: dict[str, Trajectory] = {}
    for vid in sorted(rows_by_vehicle):
        rows = sorted(rows_by_vehicle[vid], key=lambda r: r[0])
        segments: list[list[tuple[int, float, float, int]]] = [[rows[0]]]
        for prev, cur in zip(rows, rows[1:]):
            if cur[0] == prev[0]:
                raise DataError(
                    f"{path}:{cur[3]}: duplicate frame {cur[0]} for vehicle {vid!r}"
                )
            if cur[0] - prev[0] > frame_step:
                segments.append([cur])
            else:
                segments[-1].append(cur)

        usable = []
        for seg in segments:
            if len(seg) < 2:
                log.warning(
                    "%s: dropping 1-point segment for vehicle %r (row %d)",
                    path, vid, seg[0][3],
                )
            else:
                usable.append(seg)
        for k, seg in enumerate(usable, start=1):
            seg_id = vid if len(usable) == 1 else f"{vid}#{k}"
            pts = np.array([(x, y) for _, x, y, _ in seg])
            trajectories[seg_id] = Trajectory(seg_id, rate_hz, pts)

    return TrajectoryDatabase(trajectories, rate_hz, provenance=provenance)


def save_csv(db: TrajectoryDatabase, path: str | Path, schema: dict | None = None) -> None:
    """Write the database back out in the same row shape, coordinates in meters.

    Frames are renumbered sequentially per vehicle.  Floats use the shortest
    round-trip representation, so save -> load preserves coordinates exactly.
    """
    schema = dict(DEFAULT_SCHEMA, **(schema or {}))
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fieldnames = [schema["vehicle_id"], schema["frame"], schema["x"], schema["y"]]
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(fieldnames)
        for traj in db:
            for frame, (x, y) in enumerate(traj.points):
                writer.writerow([traj.vehicle_id, frame, repr(float(x)), repr(float(y))])


def resample(db: TrajectoryDatabase, target_hz: float) -> TrajectoryDatabase:
    """Linear interpolation of every trajectory onto a uniform target grid.

    The grid starts at t=0 with spacing 1/target_hz and never extends beyond
    the source time range, so endpoints are preserved exactly whenever the
    source duration is a multiple of the target step (no extrapolation ever).
    """
    if not target_hz > 0:
        raise ConfigurationError(f"target_hz must be > 0, got {target_hz}")
    if target_hz == db.sample_rate_hz:
        return db
    if target_hz > 10.0 * db.sample_rate_hz:
        log.warning(
            "resampling %s Hz -> %s Hz exceeds 10x upsampling; interpolation "
            "will not add information", db.sample_rate_hz, target_hz,
        )

    out: dict[str, Trajectory] = {}
    for traj in db:
        n_src = len(traj)
        t_src = np.arange(n_src) / db.sample_rate_hz
        t_end = t_src[-1]
        n_tgt = int(np.floor(t_end * target_hz + 1e-9)) + 1
        t_tgt = np.arange(n_tgt) / target_hz
        x = np.interp(t_tgt, t_src, traj.points[:, 0])
        y = np.interp(t_tgt, t_src, traj.points[:, 1])
        out[traj.vehicle_id] = Trajectory(
            traj.vehicle_id, target_hz, np.column_stack([x, y])
        )
    return TrajectoryDatabase(out, target_hz, provenance=db.provenance, meta=dict(db.meta))


def split(db: TrajectoryDatabase, spec: SplitSpec) -> tuple[TrajectoryDatabase, TrajectoryDatabase]:
    """Disjoint by-vehicle train/test split covering the whole database."""
    ids = db.vehicle_ids()
    if len(ids) < 2:
        raise DataError(f"need >= 2 vehicles to split, have {len(ids)}")
    n_test = int(round(spec.test_fraction * len(ids)))
    n_test = min(max(1, n_test), len(ids) - 1)
    order = np.random.default_rng(spec.seed).permutation(len(ids))
    test_ids = sorted(ids[i] for i in order[:n_test])
    train_ids = sorted(set(ids) - set(test_ids))
    return db.subset(train_ids), db.subset(test_ids)


def save_manifest(db: TrajectoryDatabase, path: str | Path) -> None:
    """Manifest file: vehicle ids, lengths, rate, provenance, per-vehicle metadata."""
    doc = {
        "version": MANIFEST_VERSION,
        "provenance": db.provenance,
        "sample_rate_hz": db.sample_rate_hz,
        "vehicles": [
            {
                "id": traj.vehicle_id,
                "points": len(traj),
                **({"scenario": db.meta[traj.vehicle_id]} if traj.vehicle_id in db.meta else {}),
            }
            for traj in db
        ],
    }
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def to_differentials(db: TrajectoryDatabase):
    """Differential sequences for every vehicle, in deterministic id order."""
    from .pipeline import differentiate

    return [differentiate(traj) for traj in db]
