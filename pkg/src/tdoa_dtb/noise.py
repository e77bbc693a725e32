"""Range-noise estimation and the received-power measurement noise model.

Detrending a per-node ToA series with a centered moving average strips the
slowly varying geometry and bias content, leaving the fast noise. Binning the
residual spread against received power yields scatter points, and a
reciprocal model sigma(rsrp) = k / (rsrp - rsrp0) is fitted through them.
The fit is closed-form via the linearization 1/sigma = (rsrp - rsrp0) / k,
an ordinary least squares of 1/sigma on rsrp.
"""

from __future__ import annotations

from dataclasses import dataclass

import csv
import math

import numpy as np

from .errors import FitError, NoRsrp, ParseError, WindowTooSmall
from .ingestion import Epoch

DEFAULT_WINDOW_S = 2.0
DEFAULT_BIN_DB = 2.0
MIN_BIN_SAMPLES = 20
DEFAULT_SIGMA_FLOOR = 0.3   # m
DEFAULT_SIGMA_CAP = 15.0    # m
DEFAULT_SIGMA_NO_RSRP = 3.0  # m, used when an observation carries no power value


@dataclass(frozen=True)
class NoiseModel:
    """Reciprocal received-power noise model with clamps around its pole."""

    k: float          # m * dB
    rsrp0: float      # dBm asymptote, must lie below the data
    sigma_floor: float = DEFAULT_SIGMA_FLOOR
    sigma_cap: float = DEFAULT_SIGMA_CAP

    def __post_init__(self):
        if self.k <= 0:
            raise ValueError(f"noise model scale must be positive, got {self.k}")
        if self.sigma_floor <= 0 or self.sigma_cap <= self.sigma_floor:
            raise ValueError("need 0 < sigma_floor < sigma_cap")


@dataclass(frozen=True)
class NoisePoint:
    rsrp: float        # dBm
    sigma_hat: float   # m

    def __post_init__(self):
        if self.sigma_hat < 0:
            raise ValueError("negative sigma_hat")


def detrend_toa(series: list[tuple[float, float]], window: float = DEFAULT_WINDOW_S
                ) -> list[tuple[float, float]]:
    """Subtract a centered moving average (time window) from a sorted series."""
    if len(series) < 2:
        return [(t, 0.0) for t, _ in series]
    times = np.asarray([t for t, _ in series], dtype=float)
    values = np.asarray([v for _, v in series], dtype=float)
    if np.any(np.diff(times) < 0):
        raise ValueError("series must be time-sorted")
    spacing = float(np.median(np.diff(times)))
    if window <= spacing:
        raise WindowTooSmall(
            f"window {window}s must exceed the median sample spacing {spacing}s"
        )
    # tiny padding keeps boundary samples symmetrically included despite
    # floating-point timestamps
    half = window / 2.0 + 1e-9 * window
    lo = np.searchsorted(times, times - half, side="left")
    hi = np.searchsorted(times, times + half, side="right")
    csum = np.concatenate([[0.0], np.cumsum(values)])
    trend = (csum[hi] - csum[lo]) / (hi - lo)
    return list(zip(times.tolist(), (values - trend).tolist()))


def estimate_noise_points(epochs: list[Epoch], window: float = DEFAULT_WINDOW_S,
                          rsrp_bin_width: float = DEFAULT_BIN_DB,
                          min_bin_samples: int = MIN_BIN_SAMPLES) -> list[NoisePoint]:
    """Detrend each node's ToA series and bucket residual spread by received power.

    Bins with fewer than min_bin_samples residuals are dropped. Raises NoRsrp
    when no observation carries a power value.
    """
    per_node: dict[str, list[tuple[float, float, float | None]]] = {}
    for epoch in epochs:
        for obs in epoch.observations:
            per_node.setdefault(obs.node_id, []).append(
                (epoch.time, obs.pseudorange, obs.rsrp))
    pairs: list[tuple[float, float]] = []  # (rsrp, residual)
    for rows in per_node.values():
        rows.sort(key=lambda r: r[0])
        series = [(t, v) for t, v, _ in rows]
        if len(series) < 2:
            continue
        residuals = detrend_toa(series, window)
        for (_, resid), (_, _, rsrp) in zip(residuals, rows):
            if rsrp is not None:
                pairs.append((rsrp, resid))
    if not pairs:
        raise NoRsrp("no observations carry received-power values")
    bins: dict[int, list[float]] = {}
    for rsrp, resid in pairs:
        bins.setdefault(int(math.floor(rsrp / rsrp_bin_width)), []).append(resid)
    points = []
    for idx in sorted(bins):
        resids = bins[idx]
        if len(resids) < min_bin_samples:
            continue
        center = (idx + 0.5) * rsrp_bin_width
        points.append(NoisePoint(center, float(np.std(resids, ddof=1))))
    return points


def fit_noise_model(points: list[NoisePoint],
                    sigma_floor: float = DEFAULT_SIGMA_FLOOR,
                    sigma_cap: float = DEFAULT_SIGMA_CAP) -> NoiseModel:
    """Fit (k, rsrp0) by least squares of 1/sigma on rsrp.

    Needs at least 3 points spanning at least 10 dB; the recovered asymptote
    must fall at least 1 dB below the weakest power in the data, otherwise
    the geometry of the points contradicts the model and FitError is raised.
    """
    usable = [p for p in points if p.sigma_hat > 0]
    if len(usable) < 3:
        raise FitError(f"need at least 3 points with positive sigma, got {len(usable)}")
    rsrp = np.array([p.rsrp for p in usable])
    if rsrp.max() - rsrp.min() < 10.0:
        raise FitError(f"points span only {rsrp.max() - rsrp.min():.1f} dB, need >= 10")
    y = 1.0 / np.array([p.sigma_hat for p in usable])
    slope, intercept = np.polyfit(rsrp, y, 1)
    if slope <= 0:
        raise FitError("noise does not decrease with power; reciprocal model invalid")
    k = float(1.0 / slope)
    rsrp0 = float(-intercept * k)
    if rsrp0 > rsrp.min() - 1.0:
        raise FitError(
            f"fitted asymptote {rsrp0:.1f} dBm lies inside the data range "
            f"(min power {rsrp.min():.1f} dBm)"
        )
    return NoiseModel(k, rsrp0, sigma_floor, sigma_cap)


def sigma_for(model: NoiseModel, rsrp: float | None,
              default_sigma: float = DEFAULT_SIGMA_NO_RSRP) -> float:
    """Measurement sigma for one ToA, clamped to [floor, cap]; total function."""
    if rsrp is None:
        return default_sigma
    if rsrp <= model.rsrp0:
        return model.sigma_cap
    return min(max(model.k / (rsrp - model.rsrp0), model.sigma_floor), model.sigma_cap)


def write_noise_model(model: NoiseModel, path) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["k", "rsrp0", "sigma_floor", "sigma_cap"])
        writer.writerow([repr(model.k), repr(model.rsrp0),
                         repr(model.sigma_floor), repr(model.sigma_cap)])


def read_noise_model(path) -> NoiseModel:
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        expected = {"k", "rsrp0", "sigma_floor", "sigma_cap"}
        if reader.fieldnames is None or not expected <= set(reader.fieldnames):
            raise ParseError(path, 1, "expected header k,rsrp0,sigma_floor,sigma_cap")
        rows = list(reader)
    if len(rows) != 1:
        raise ParseError(path, 2, f"expected exactly one model row, got {len(rows)}")
    try:
        return NoiseModel(float(rows[0]["k"]), float(rows[0]["rsrp0"]),
                          float(rows[0]["sigma_floor"]), float(rows[0]["sigma_cap"]))
    except ValueError as exc:
        raise ParseError(path, 2, f"bad noise model: {exc}") from None


def write_noise_points(points: list[NoisePoint], path) -> None:
    """Plot-ready scatter of estimated noise against received power."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["rsrp_dbm", "sigma_m"])
        for p in points:
            writer.writerow([repr(p.rsrp), repr(p.sigma_hat)])
