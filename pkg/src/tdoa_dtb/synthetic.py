"""Deterministic scenario generator used as the ground-truth oracle.

Pseudo-ranges are built directly from the forward model: geometry plus rover
clock, minus the node bias, plus an optional non-line-of-sight offset and
Gaussian noise whose sigma follows the received-power model (or a constant).
Received power comes from a log-distance path loss. The noise stream is keyed
by (seed, node index, epoch index), so output is byte-stable regardless of
generation order.

An optional quantization step rounds pseudo-ranges to a fixed grid, mimicking
receiver timestamp granularity; with a grid-aligned clock model this makes
rover-clock cancellation bit-exact instead of merely exact-to-rounding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import yaml

from .dtb import DtbEntry, DtbTable
from .errors import InvalidScenario, TooFewNodes
from .geometry import NodeCatalog, Position, range_between
from .ingestion import Epoch, ReferenceTrajectory, ToaObservation
from .noise import NoiseModel, sigma_for


@dataclass(frozen=True)
class ClockModel:
    """Rover clock bias in meters as a function of session time.

    kinds: "zero"; "constant" (fixed offset); "sawtooth" (linear drift with
    periodic jumps of reset_magnitude, visible simultaneously on all nodes).
    """

    kind: str = "zero"
    value: float = 0.0            # constant offset, m
    drift_rate: float = 0.0       # m/s
    reset_period: float = 0.0     # s
    reset_magnitude: float = 0.0  # m, subtracted at each reset

    def __post_init__(self):
        if self.kind not in ("zero", "constant", "sawtooth"):
            raise InvalidScenario(f"unknown clock kind {self.kind!r}")
        if self.kind == "sawtooth" and self.reset_period <= 0:
            raise InvalidScenario("sawtooth clock needs reset_period > 0")

    def bias_at(self, t: float) -> float:
        if self.kind == "zero":
            return 0.0
        if self.kind == "constant":
            return self.value
        return self.drift_rate * t - self.reset_magnitude * math.floor(t / self.reset_period)


@dataclass(frozen=True)
class PathLossModel:
    """Log-distance received power: p0 dBm at 1 m, decaying with exponent gamma."""

    p0: float = -40.0
    gamma: float = 2.5
    min_range: float = 0.1  # m, guards the log at zero range

    def rsrp(self, rho: float) -> float:
        return self.p0 - 10.0 * self.gamma * math.log10(max(rho, self.min_range))


@dataclass
class Scenario:
    catalog: NodeCatalog
    node_biases: dict[str, float] = field(default_factory=dict)    # b^n, m
    rover_clock: ClockModel = field(default_factory=ClockModel)
    waypoints: list[tuple[float, float]] = field(default_factory=list)
    speed: float = 1.0            # m/s along the waypoint polyline
    epoch_rate: float = 1.0       # Hz
    noise: NoiseModel | float = 0.0   # model, or constant per-ToA sigma in m
    path_loss: PathLossModel = field(default_factory=PathLossModel)
    nlos_offset: dict[str, float] | None = None
    seed: int = 0
    duration: float | None = None     # s; default: time to traverse the polyline
    quantize: float | None = None     # m; round pseudo-ranges to this grid

    def __post_init__(self):
        if self.epoch_rate <= 0:
            raise InvalidScenario("epoch_rate must be positive")
        if self.speed < 0:
            raise InvalidScenario("speed must be non-negative")
        if not self.waypoints:
            raise InvalidScenario("scenario needs at least one waypoint")
        for mapping, what in ((self.node_biases, "bias"), (self.nlos_offset or {}, "nlos")):
            for node_id in mapping:
                if node_id not in self.catalog:
                    raise InvalidScenario(f"{what} for unknown node {node_id!r}")
        if isinstance(self.noise, (int, float)) and self.noise < 0:
            raise InvalidScenario("constant noise sigma must be non-negative")
        if self.duration is None and self.speed == 0 and len(self.waypoints) > 1:
            raise InvalidScenario("zero speed needs an explicit duration")


def _polyline(waypoints: list[tuple[float, float]]):
    pts = np.asarray(waypoints, dtype=float)
    if pts.shape[0] == 1:
        return pts, np.array([0.0])
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    return pts, np.concatenate([[0.0], np.cumsum(seg)])


def _position_at(pts: np.ndarray, cumlen: np.ndarray, dist: float) -> tuple[float, float]:
    total = cumlen[-1]
    if total == 0.0 or dist <= 0.0:
        return float(pts[0, 0]), float(pts[0, 1])
    if dist >= total:
        return float(pts[-1, 0]), float(pts[-1, 1])
    i = int(np.searchsorted(cumlen, dist, side="right")) - 1
    w = (dist - cumlen[i]) / (cumlen[i + 1] - cumlen[i])
    p = (1.0 - w) * pts[i] + w * pts[i + 1]
    return float(p[0]), float(p[1])


def _quantize(value: float, grid: float | None) -> float:
    if grid is None:
        return value
    return round(value / grid) * grid


@dataclass
class SyntheticSession:
    epochs: list[Epoch]
    catalog: NodeCatalog
    trajectory: ReferenceTrajectory
    scenario: Scenario

    def truth_dtb(self, ref_node_id: str, session: str = "truth") -> DtbTable:
        """Analytic DTB table for any reference: bias differences plus NLOS differences."""
        return truth_dtb(self.scenario, ref_node_id, session)


def truth_dtb(scenario: Scenario, ref_node_id: str, session: str = "truth") -> DtbTable:
    if ref_node_id not in scenario.catalog:
        raise InvalidScenario(f"reference {ref_node_id!r} not in catalog")
    nlos = scenario.nlos_offset or {}
    b_ref = scenario.node_biases.get(ref_node_id, 0.0) - nlos.get(ref_node_id, 0.0)
    entries = {}
    for node_id in scenario.catalog.ids():
        if node_id == ref_node_id:
            continue
        b_n = scenario.node_biases.get(node_id, 0.0) - nlos.get(node_id, 0.0)
        entries[node_id] = DtbEntry(mean=-b_n + b_ref, std=0.0, n_samples=1)
    return DtbTable(ref_node_id, entries, session)


def generate(scenario: Scenario) -> SyntheticSession:
    """Generate a full session: epoch-grouped observations plus the exact trajectory."""
    pts, cumlen = _polyline(scenario.waypoints)
    duration = scenario.duration
    if duration is None:
        duration = cumlen[-1] / scenario.speed if scenario.speed > 0 else 1.0
    n_epochs = int(math.floor(duration * scenario.epoch_rate)) + 1
    if n_epochs < 2:
        raise InvalidScenario("scenario spans fewer than 2 epochs")

    node_ids = scenario.catalog.ids()
    nlos = scenario.nlos_offset or {}
    epochs = []
    traj_samples = []
    for k in range(n_epochs):
        t = k / scenario.epoch_rate
        x, y = _position_at(pts, cumlen, scenario.speed * t)
        rover = Position(x, y)
        traj_samples.append((t, rover))
        clock = scenario.rover_clock.bias_at(t)
        observations = []
        for node_index, node_id in enumerate(node_ids):
            rho = range_between(rover, scenario.catalog[node_id])
            rsrp = scenario.path_loss.rsrp(rho)
            if isinstance(scenario.noise, NoiseModel):
                sigma = sigma_for(scenario.noise, rsrp)
            else:
                sigma = float(scenario.noise)
            rng = np.random.default_rng([scenario.seed, node_index, k])
            eps = sigma * rng.standard_normal() if sigma > 0 else 0.0
            toa = (rho - scenario.node_biases.get(node_id, 0.0)
                   + nlos.get(node_id, 0.0) + eps)
            toa = _quantize(toa, scenario.quantize) + clock
            observations.append(ToaObservation(t, node_id, toa, rsrp))
        epochs.append(Epoch(t, tuple(observations)))
    return SyntheticSession(epochs, scenario.catalog,
                            ReferenceTrajectory(traj_samples), scenario)


def load_scenario(path) -> Scenario:
    """Build a scenario from its YAML description (see README for the schema)."""
    with open(path) as f:
        raw = yaml.safe_load(f)
    if not isinstance(raw, dict):
        raise InvalidScenario(f"{path}: scenario file must be a mapping")
    try:
        nodes = {
            str(node_id): Position(*[float(c) for c in coords])
            for node_id, coords in raw["nodes"].items()
        }
        catalog = NodeCatalog(nodes)
        clock_raw = dict(raw.get("clock", {"kind": "zero"}))
        clock = ClockModel(**clock_raw)
        noise_raw = raw.get("noise", 0.0)
        if isinstance(noise_raw, dict):
            if "sigma" in noise_raw:
                noise = float(noise_raw["sigma"])
            else:
                noise = NoiseModel(**{k: float(v) for k, v in noise_raw.items()})
        else:
            noise = float(noise_raw)
        pl_raw = raw.get("path_loss", {})
        path_loss = PathLossModel(**{k: float(v) for k, v in pl_raw.items()})
        return Scenario(
            catalog=catalog,
            node_biases={str(k): float(v) for k, v in raw.get("biases", {}).items()},
            rover_clock=clock,
            waypoints=[(float(x), float(y)) for x, y in raw["waypoints"]],
            speed=float(raw.get("speed", 1.0)),
            epoch_rate=float(raw.get("epoch_rate", 1.0)),
            noise=noise,
            path_loss=path_loss,
            nlos_offset={str(k): float(v) for k, v in raw["nlos"].items()}
            if raw.get("nlos") else None,
            seed=int(raw.get("seed", 0)),
            duration=float(raw["duration"]) if raw.get("duration") is not None else None,
            quantize=float(raw["quantize"]) if raw.get("quantize") is not None else None,
        )
    except (KeyError, TypeError, ValueError, TooFewNodes) as exc:
        raise InvalidScenario(f"{path}: {exc}") from None
