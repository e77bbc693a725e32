"""Session performance metrics: true error, formal sigma, postfit sigma.

Three complementary error measures for one filtered session:

* true error: planar distance between each estimate and the interpolated
  reference position (both mean and RMS are reported, since either convention
  is common);
* formal sigma: average over epochs of the root trace of the state covariance
  (typically optimistic);
* postfit sigma: root of the residual sum of squares divided by the degrees
  of freedom, an upper-boundary style estimate.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

from .ekf import TrackPoint
from .errors import EmptyTrack, InsufficientResiduals, NoOverlap
from .ingestion import ReferenceTrajectory

N_PARAM_2D = 2  # estimated parameters: the two position components


@dataclass(frozen=True)
class SessionMetrics:
    true_error_mean: float
    true_error_rms: float
    sigma_formal: float
    sigma_postfits: float
    n_epochs: int

    def to_json_dict(self) -> dict:
        return {
            "true_error_mean_m": self.true_error_mean,
            "true_error_rms_m": self.true_error_rms,
            "sigma_formal_m": self.sigma_formal,
            "sigma_postfits_m": self.sigma_postfits,
            "n_epochs": self.n_epochs,
        }


def true_error(track: list[TrackPoint], traj: ReferenceTrajectory) -> tuple[float, float]:
    """Mean and RMS planar distance to the interpolated reference trajectory."""
    errors = []
    for p in track:
        if not traj.covers(p.time):
            continue
        ref = traj.interpolate(p.time)
        errors.append(math.hypot(p.x - ref.x, p.y - ref.y))
    if not errors:
        raise NoOverlap("track and reference trajectory have no common time span")
    mean = sum(errors) / len(errors)
    rms = math.sqrt(sum(e * e for e in errors) / len(errors))
    return mean, rms


def sigma_formal(track: list[TrackPoint]) -> float:
    """Mean over epochs of the root trace of the position covariance."""
    if not track:
        raise EmptyTrack("no epochs in track")
    return sum(math.sqrt(p.cov_xx + p.cov_yy) for p in track) / len(track)


def sigma_postfits(residuals: list[float], n_param: int = N_PARAM_2D) -> float:
    """Degrees-of-freedom-corrected RMS of the postfit residuals."""
    n = len(residuals)
    if n <= n_param:
        raise InsufficientResiduals(f"{n} residuals with {n_param} parameters")
    return math.sqrt(sum(e * e for e in residuals) / (n - n_param))


def session_metrics(track: list[TrackPoint], traj: ReferenceTrajectory,
                    residuals: list[float], n_param: int = N_PARAM_2D) -> SessionMetrics:
    mean, rms = true_error(track, traj)
    return SessionMetrics(
        true_error_mean=mean,
        true_error_rms=rms,
        sigma_formal=sigma_formal(track),
        sigma_postfits=sigma_postfits(residuals, n_param),
        n_epochs=len(track),
    )


def write_metrics_json(metrics: SessionMetrics, path) -> None:
    with open(path, "w") as f:
        json.dump(metrics.to_json_dict(), f, indent=2, sort_keys=True)
        f.write("\n")
