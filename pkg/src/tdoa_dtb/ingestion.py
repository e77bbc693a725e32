"""Session loading: ToA observation files, node catalogs, reference trajectories.

Canonical file formats (all CSV, meters and seconds):

* ToA file:        ``time,node_id,toa,rsrp`` (rsrp column optional, dBm;
  toa in meters or seconds depending on the unit mode)
* Trajectory file: ``time,x,y`` with an optional ``z`` column
* Node catalog:    ``node_id,x,y`` with an optional ``z`` column
"""

from __future__ import annotations

import bisect
import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptySession, OutOfRange, ParseError, UnitError, UnknownNode
from .geometry import NodeCatalog, Position, node_sort_key

SPEED_OF_LIGHT = 299792458.0  # m/s

# A converted pseudorange beyond this is taken as a sign that the raw values
# were not actually in seconds (3.3 ms of light travel is ~1000 km).
MAX_PLAUSIBLE_RANGE_M = 1.0e6

DEFAULT_EPOCH_TOL = 1.0e-3  # s


@dataclass(frozen=True)
class ToaObservation:
    """One node's pseudo-range (and optionally received power) at one epoch."""

    epoch: float          # session-relative seconds
    node_id: str
    pseudorange: float    # meters
    rsrp: float | None = None   # dBm; None when the session lacks power data


@dataclass(frozen=True)
class Epoch:
    """All observations sharing one measurement timestamp."""

    time: float
    observations: tuple[ToaObservation, ...]

    def __post_init__(self):
        if not self.observations:
            raise ValueError("epoch with no observations")
        ids = [o.node_id for o in self.observations]
        if len(ids) != len(set(ids)):
            raise ValueError(f"duplicate node in epoch at t={self.time}")

    def by_node(self) -> dict[str, ToaObservation]:
        return {o.node_id: o for o in self.observations}


class ReferenceTrajectory:
    """Time-ordered ground-truth positions supporting linear interpolation."""

    def __init__(self, samples: list[tuple[float, Position]]):
        if len(samples) < 2:
            raise ValueError("trajectory needs at least 2 samples")
        times = [t for t, _ in samples]
        if any(t1 <= t0 for t0, t1 in zip(times, times[1:])):
            raise ValueError("trajectory times must be strictly increasing")
        self.times = np.asarray(times, dtype=float)
        self.xyz = np.array([[p.x, p.y, p.z] for _, p in samples], dtype=float)

    @property
    def t_start(self) -> float:
        return float(self.times[0])

    @property
    def t_end(self) -> float:
        return float(self.times[-1])

    def __len__(self) -> int:
        return len(self.times)

    def samples(self) -> list[tuple[float, Position]]:
        return [(float(t), Position(*map(float, row)))
                for t, row in zip(self.times, self.xyz)]

    def covers(self, t: float) -> bool:
        return self.t_start <= t <= self.t_end

    def interpolate(self, t: float) -> Position:
        if not self.covers(t):
            raise OutOfRange(
                f"t={t} outside trajectory span [{self.t_start}, {self.t_end}]"
            )
        i = bisect.bisect_right(self.times, t)
        if i == len(self.times):
            return Position(*map(float, self.xyz[-1]))
        i0 = max(i - 1, 0)
        t0 = self.times[i0]
        if t == t0:
            return Position(*map(float, self.xyz[i0]))
        t1 = self.times[i0 + 1]
        w = (t - t0) / (t1 - t0)
        row = (1.0 - w) * self.xyz[i0] + w * self.xyz[i0 + 1]
        return Position(*map(float, row))


def interpolate_reference(traj: ReferenceTrajectory, t: float) -> Position:
    """Linearly interpolated reference position at time t."""
    return traj.interpolate(t)


def load_trajectory(path) -> ReferenceTrajectory:
    samples = []
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None or not {"time", "x", "y"} <= set(reader.fieldnames):
            raise ParseError(path, 1, "expected header time,x,y[,z]")
        for lineno, row in enumerate(reader, start=2):
            try:
                z = float(row["z"]) if row.get("z") not in (None, "") else 0.0
                samples.append((float(row["time"]), Position(float(row["x"]), float(row["y"]), z)))
            except (TypeError, ValueError) as exc:
                raise ParseError(path, lineno, f"bad trajectory row: {exc}") from None
    if len(samples) < 2:
        raise ParseError(path, 1, "trajectory needs at least 2 samples")
    try:
        return ReferenceTrajectory(samples)
    except ValueError as exc:
        raise ParseError(path, 1, str(exc)) from None


def load_toa_rows(path, unit_mode: str = "meters") -> list[ToaObservation]:
    """Parse a ToA file into observations, converting seconds to meters if asked."""
    if unit_mode not in ("meters", "seconds"):
        raise ValueError(f"unit_mode must be 'meters' or 'seconds', got {unit_mode!r}")
    rows = []
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None or not {"time", "node_id", "toa"} <= set(reader.fieldnames):
            raise ParseError(path, 1, "expected header time,node_id,toa[,rsrp]")
        for lineno, row in enumerate(reader, start=2):
            try:
                t = float(row["time"])
                toa = float(row["toa"])
                rsrp_raw = row.get("rsrp")
                rsrp = float(rsrp_raw) if rsrp_raw not in (None, "") else None
            except (TypeError, ValueError) as exc:
                raise ParseError(path, lineno, f"bad observation row: {exc}") from None
            if unit_mode == "seconds":
                toa *= SPEED_OF_LIGHT
                if abs(toa) > MAX_PLAUSIBLE_RANGE_M:
                    raise UnitError(
                        f"{path}:{lineno}: converted pseudorange {toa:.3e} m exceeds "
                        f"plausible light-travel bounds; raw values are likely meters"
                    )
            if not np.isfinite(toa):
                raise ParseError(path, lineno, f"non-finite pseudorange {toa}")
            rows.append(ToaObservation(t, row["node_id"].strip(), toa, rsrp))
    return rows


def group_epochs(rows: list[ToaObservation], epoch_tol: float = DEFAULT_EPOCH_TOL) -> list[Epoch]:
    """Partition observations into epochs of equal timestamp within a tolerance.

    Each row lands in exactly one epoch; a row opens a new epoch when its time
    differs from the current epoch's first row by more than the tolerance.
    """
    ordered = sorted(rows, key=lambda o: (o.epoch, node_sort_key(o.node_id)))
    epochs: list[Epoch] = []
    group: list[ToaObservation] = []
    for obs in ordered:
        if group and obs.epoch - group[0].epoch > epoch_tol:
            epochs.append(Epoch(group[0].epoch, tuple(group)))
            group = []
        group.append(obs)
    if group:
        epochs.append(Epoch(group[0].epoch, tuple(group)))
    return epochs


def load_toa_epochs(path, unit_mode: str = "meters",
                    epoch_tol: float = DEFAULT_EPOCH_TOL) -> list[Epoch]:
    """Load and epoch-group a ToA file without requiring a catalog."""
    epochs = group_epochs(load_toa_rows(path, unit_mode), epoch_tol)
    if not epochs:
        raise EmptySession(f"{path}: no observations")
    return epochs


def load_session(toa_file, node_file, trajectory_file, unit_mode: str = "meters",
                 epoch_tol: float = DEFAULT_EPOCH_TOL):
    """Load a full measurement session.

    Returns (epochs, catalog, trajectory). Every observed node must appear in
    the catalog; epochs outside the trajectory span are retained (calibration
    skips them, positioning does not need the trajectory).
    """
    catalog = NodeCatalog.from_csv(node_file)
    rows = load_toa_rows(toa_file, unit_mode)
    for obs in rows:
        if obs.node_id not in catalog:
            raise UnknownNode(f"{toa_file}: observation at t={obs.epoch} references "
                              f"unknown node {obs.node_id!r}")
    epochs = group_epochs(rows, epoch_tol)
    if not epochs:
        raise EmptySession(f"{toa_file}: no observations")
    traj = load_trajectory(trajectory_file)
    return epochs, catalog, traj


def write_toa_csv(epochs: list[Epoch], path) -> None:
    """Write epochs back to the canonical ToA format (meters)."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["time", "node_id", "toa", "rsrp"])
        for epoch in epochs:
            for obs in epoch.observations:
                writer.writerow([
                    repr(obs.epoch), obs.node_id, repr(obs.pseudorange),
                    "" if obs.rsrp is None else repr(obs.rsrp),
                ])


def write_trajectory_csv(traj: ReferenceTrajectory, path) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["time", "x", "y", "z"])
        for t, pos in traj.samples():
            writer.writerow([repr(t), repr(pos.x), repr(pos.y), repr(pos.z)])
