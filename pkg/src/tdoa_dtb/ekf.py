"""Extended Kalman Filter over 2D rover position using calibrated TDoA observables.

State is the planar position only: the rover clock is removed by differencing
and the node biases by the DTB corrections, so no bias states are needed.
Propagation is identity with process noise accumulating linearly in time;
updates are joint vector updates with Joseph-form covariance for numerical
robustness. Innovation gating only counts rejections by default; rejected
observations are never applied.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .differencing import TdoaObservation, form_tdoa
from .dtb import DtbTable, rereference_dtb
from .errors import (NegativeDt, ParseError, ReferenceMissing, SingularGeometry,
                     TooFewNodes)
from .geometry import NodeCatalog, Position, range_between
from .ingestion import Epoch
from .noise import NoiseModel, sigma_for

MIN_RANGE_M = 1.0e-6   # below this the range partials are undefined
PSD_TOL = -1.0e-9


@dataclass
class EkfConfig:
    """Filter tuning knobs.

    sigma_x / sigma_y are process-noise densities in m/sqrt(s): the position
    uncertainty grows by sigma^2 * dt per prediction, which keeps behavior
    independent of the epoch raster.
    """

    sigma_x: float = 0.5
    sigma_y: float = 0.5
    min_obs_per_update: int = 1
    innovation_gate: float = 5.0
    default_sigma: float = 3.0   # m, per-ToA sigma when rsrp is absent

    def __post_init__(self):
        if self.sigma_x <= 0 or self.sigma_y <= 0:
            raise ValueError("process noise densities must be positive")


@dataclass
class EkfState:
    position: np.ndarray      # shape (2,), meters
    covariance: np.ndarray    # shape (2, 2), m^2, symmetric PSD
    epoch: float = 0.0

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float).reshape(2)
        self.covariance = _symmetrize_psd(np.asarray(self.covariance, dtype=float).reshape(2, 2))
        if not np.all(np.isfinite(self.position)):
            raise ValueError("non-finite filter position")


@dataclass
class EpochResult:
    state: EkfState
    postfit_residuals: list[tuple[str, float]] = field(default_factory=list)
    accepted_obs: int = 0
    rejected_obs: int = 0


def _symmetrize_psd(cov: np.ndarray) -> np.ndarray:
    cov = 0.5 * (cov + cov.T)
    eigvals = np.linalg.eigvalsh(cov)
    if eigvals.min() < PSD_TOL:
        raise ValueError(f"covariance not PSD, min eigenvalue {eigvals.min():.3e}")
    return cov


def init_apriori(catalog: NodeCatalog) -> EkfState:
    """Start at the average node position with the node dispersion as uncertainty.

    Per-axis variance is the sample variance of the node coordinates, floored
    at 1 m^2 so degenerate layouts still give a usable prior.
    """
    if len(catalog) < 2:
        raise TooFewNodes("apriori needs at least 2 nodes")
    xy = np.array([[p.x, p.y] for _, p in catalog.items()])
    mean = xy.mean(axis=0)
    var = np.maximum(xy.var(axis=0, ddof=1), 1.0)
    return EkfState(position=mean, covariance=np.diag(var))


def predict(state: EkfState, dt: float, cfg: EkfConfig) -> EkfState:
    """Identity propagation: position carried over, covariance inflated by Q*dt."""
    if dt < 0:
        raise NegativeDt(f"dt={dt}")
    q = np.diag([cfg.sigma_x ** 2 * dt, cfg.sigma_y ** 2 * dt])
    return EkfState(position=state.position.copy(),
                    covariance=state.covariance + q,
                    epoch=state.epoch + dt)


def measurement_model(state: EkfState, obs: TdoaObservation, dtb: DtbTable,
                      catalog: NodeCatalog) -> tuple[float, tuple[float, float]]:
    """Predicted single difference and its position partials at the current state.

    predicted = (range to node) - (range to reference) + DTB(node)
    d(predicted)/dx = (x_r - x_n)/rho_n - (x_r - x_m)/rho_m, likewise for y.
    """
    if obs.ref_node_id != dtb.ref_node_id:
        dtb = rereference_dtb(dtb, obs.ref_node_id)
    node = catalog[obs.node_id]
    ref = catalog[obs.ref_node_id]
    rover = Position(float(state.position[0]), float(state.position[1]))
    rho_n = range_between(rover, node)
    rho_m = range_between(rover, ref)
    if rho_n < MIN_RANGE_M or rho_m < MIN_RANGE_M:
        culprit = obs.node_id if rho_n < MIN_RANGE_M else obs.ref_node_id
        raise SingularGeometry(f"rover coincides with node {culprit!r}")
    predicted = rho_n - rho_m + dtb.mean(obs.node_id)
    hx = (rover.x - node.x) / rho_n - (rover.x - ref.x) / rho_m
    hy = (rover.y - node.y) / rho_n - (rover.y - ref.y) / rho_m
    return predicted, (hx, hy)


def update(state: EkfState, epoch_obs: list[TdoaObservation], dtb: DtbTable,
           catalog: NodeCatalog, noise: NoiseModel, cfg: EkfConfig) -> EpochResult:
    """Joint vector update with all accepted observations of one epoch.

    Per-observation variance combines both ends of the difference:
    R_i = sigma(rsrp_node)^2 + sigma(rsrp_ref)^2. Innovations beyond
    gate * sqrt(H P H' + R) are counted as rejected and never applied. With
    zero accepted observations the predicted state is returned unchanged.
    """
    rows = []      # (obs, innovation, (hx, hy), r_var)
    rejected = 0
    for obs in epoch_obs:
        try:
            predicted, h = measurement_model(state, obs, dtb, catalog)
        except SingularGeometry:
            rejected += 1
            continue
        r_var = (sigma_for(noise, obs.rsrp_node, cfg.default_sigma) ** 2
                 + sigma_for(noise, obs.rsrp_ref, cfg.default_sigma) ** 2)
        innovation = obs.sd_pseudorange - predicted
        hvec = np.array(h)
        s = float(hvec @ state.covariance @ hvec + r_var)
        if abs(innovation) > cfg.innovation_gate * np.sqrt(s):
            rejected += 1
            continue
        rows.append((obs, innovation, hvec, r_var))

    if len(rows) < max(cfg.min_obs_per_update, 1):
        # too few usable observations: state stays at the prediction
        return EpochResult(state=state, accepted_obs=0, rejected_obs=rejected)

    h_mat = np.array([r[2] for r in rows])                  # (n, 2)
    innovations = np.array([r[1] for r in rows])            # (n,)
    r_mat = np.diag([r[3] for r in rows])                   # (n, n)
    p = state.covariance
    s_mat = h_mat @ p @ h_mat.T + r_mat
    gain = p @ h_mat.T @ np.linalg.inv(s_mat)               # (2, n)
    new_pos = state.position + gain @ innovations
    ikh = np.eye(2) - gain @ h_mat
    new_cov = ikh @ p @ ikh.T + gain @ r_mat @ gain.T       # Joseph form
    new_state = EkfState(position=new_pos, covariance=new_cov, epoch=state.epoch)

    postfits = []
    for obs, _, _, _ in rows:
        predicted, _ = measurement_model(new_state, obs, dtb, catalog)
        postfits.append((obs.node_id, obs.sd_pseudorange - predicted))
    return EpochResult(state=new_state, postfit_residuals=postfits,
                       accepted_obs=len(rows), rejected_obs=rejected)


def run_filter(epochs: list[Epoch], dtb: DtbTable, catalog: NodeCatalog,
               noise: NoiseModel, cfg: EkfConfig | None = None) -> list[EpochResult]:
    """Filter a session: apriori from the node layout, then predict/update per epoch.

    Single differences are formed against the DTB table's reference node;
    epochs where that node is missing contribute a prediction-only result.
    """
    cfg = cfg or EkfConfig()
    results: list[EpochResult] = []
    state: EkfState | None = None
    for epoch in sorted(epochs, key=lambda e: e.time):
        if state is None:
            state = init_apriori(catalog)
            state.epoch = epoch.time
        else:
            state = predict(state, epoch.time - state.epoch, cfg)
        try:
            tdoa = form_tdoa(epoch, dtb.ref_node_id)
        except ReferenceMissing:
            results.append(EpochResult(state=state))
            continue
        result = update(state, tdoa, dtb, catalog, noise, cfg)
        state = result.state
        results.append(result)
    return results


@dataclass(frozen=True)
class TrackPoint:
    """One row of the track output, covariance flattened for CSV transport."""

    time: float
    x: float
    y: float
    cov_xx: float
    cov_xy: float
    cov_yy: float
    n_obs: int
    n_rejected: int


def to_track(results: list[EpochResult]) -> list[TrackPoint]:
    return [TrackPoint(
        time=r.state.epoch,
        x=float(r.state.position[0]), y=float(r.state.position[1]),
        cov_xx=float(r.state.covariance[0, 0]),
        cov_xy=float(r.state.covariance[0, 1]),
        cov_yy=float(r.state.covariance[1, 1]),
        n_obs=r.accepted_obs, n_rejected=r.rejected_obs,
    ) for r in results]


def write_track_csv(results: list[EpochResult], path) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["time", "x", "y", "cov_xx", "cov_xy", "cov_yy",
                         "n_obs", "n_rejected"])
        for p in to_track(results):
            writer.writerow([repr(p.time), repr(p.x), repr(p.y), repr(p.cov_xx),
                             repr(p.cov_xy), repr(p.cov_yy), p.n_obs, p.n_rejected])


def read_track_csv(path) -> list[TrackPoint]:
    points = []
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        expected = {"time", "x", "y", "cov_xx", "cov_xy", "cov_yy", "n_obs", "n_rejected"}
        if reader.fieldnames is None or not expected <= set(reader.fieldnames):
            raise ParseError(path, 1, "bad track header")
        for lineno, row in enumerate(reader, start=2):
            try:
                points.append(TrackPoint(
                    float(row["time"]), float(row["x"]), float(row["y"]),
                    float(row["cov_xx"]), float(row["cov_xy"]), float(row["cov_yy"]),
                    int(row["n_obs"]), int(row["n_rejected"])))
            except ValueError as exc:
                raise ParseError(path, lineno, f"bad track row: {exc}") from None
    return points


def write_residuals_csv(results: list[EpochResult], path) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["time", "node_id", "postfit_m"])
        for r in results:
            for node_id, value in r.postfit_residuals:
                writer.writerow([repr(r.state.epoch), node_id, repr(value)])


def read_residuals_csv(path) -> list[tuple[float, str, float]]:
    rows = []
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None or not {"time", "node_id", "postfit_m"} <= set(reader.fieldnames):
            raise ParseError(path, 1, "bad residuals header")
        for lineno, row in enumerate(reader, start=2):
            try:
                rows.append((float(row["time"]), row["node_id"], float(row["postfit_m"])))
            except ValueError as exc:
                raise ParseError(path, lineno, f"bad residual row: {exc}") from None
    return rows
