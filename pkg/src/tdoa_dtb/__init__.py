"""DTB calibration and TDoA Kalman positioning for wireless ToA sessions."""

__version__ = "0.1.0"

from .geometry import NodeCatalog, Position, range_between, sd_range
from .ingestion import (Epoch, ReferenceTrajectory, ToaObservation,
                        interpolate_reference, load_session)
from .differencing import TdoaObservation, form_tdoa, select_reference
from .dtb import (DtbEntry, DtbSample, DtbTable, aggregate_dtb,
                  instantaneous_dtb, read_dtb, rereference_dtb, write_dtb)
from .noise import (NoiseModel, NoisePoint, detrend_toa, estimate_noise_points,
                    fit_noise_model, sigma_for)
from .ekf import (EkfConfig, EkfState, EpochResult, TrackPoint, init_apriori,
                  measurement_model, predict, run_filter, to_track, update)
from .metrics import SessionMetrics, session_metrics, sigma_formal, sigma_postfits, true_error
from .synthetic import ClockModel, PathLossModel, Scenario, generate, load_scenario

__all__ = [
    "NodeCatalog", "Position", "range_between", "sd_range",
    "Epoch", "ReferenceTrajectory", "ToaObservation", "interpolate_reference",
    "load_session",
    "TdoaObservation", "form_tdoa", "select_reference",
    "DtbEntry", "DtbSample", "DtbTable", "aggregate_dtb", "instantaneous_dtb",
    "read_dtb", "rereference_dtb", "write_dtb",
    "NoiseModel", "NoisePoint", "detrend_toa", "estimate_noise_points",
    "fit_noise_model", "sigma_for",
    "EkfConfig", "EkfState", "EpochResult", "TrackPoint", "init_apriori",
    "measurement_model", "predict", "run_filter", "to_track", "update",
    "SessionMetrics", "session_metrics", "sigma_formal", "sigma_postfits",
    "true_error",
    "ClockModel", "PathLossModel", "Scenario", "generate", "load_scenario",
]
