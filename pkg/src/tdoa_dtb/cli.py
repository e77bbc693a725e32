"""Batch command line front-end.

Subcommands wire the pipeline end to end:

    simulate -> fit-noise -> calibrate -> position -> evaluate

plus ``rereference`` for switching a correction table to another reference
node. Exit codes: 0 success, 1 usage error, 2 data error. Diagnostics go to
stderr; data only ever goes to files. Every output directory receives a
``run_manifest.json`` describing the invocation.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from datetime import datetime, timezone

from . import __version__
from .differencing import form_tdoa, select_reference
from .dtb import aggregate_dtb, instantaneous_dtb, read_dtb, rereference_dtb, write_dtb
from .ekf import (EkfConfig, read_residuals_csv, read_track_csv, run_filter,
                  write_residuals_csv, write_track_csv)
from .errors import ReferenceMissing, TdoaDtbError
from .geometry import NodeCatalog
from .ingestion import (load_session, load_toa_epochs, load_trajectory,
                        write_toa_csv, write_trajectory_csv)
from .metrics import session_metrics, write_metrics_json
from .noise import (estimate_noise_points, fit_noise_model, read_noise_model,
                    write_noise_model, write_noise_points)
from .synthetic import generate, load_scenario

RESIDUAL_HIST_BIN_M = 0.25


class _Parser(argparse.ArgumentParser):
    """argparse with usage failures mapped to exit code 1 instead of 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _write_manifest(out_path, subcommand: str, args: argparse.Namespace,
                    is_dir: bool = False) -> None:
    out_dir = os.path.abspath(out_path) if is_dir else os.path.dirname(os.path.abspath(out_path))
    params = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    manifest = {
        "subcommand": subcommand,
        "parameters": params,
        "tool_version": __version__,
        "timestamp": datetime.now(timezone.utc).isoformat(),
    }
    with open(os.path.join(out_dir, "run_manifest.json"), "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")


def _add_session_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--unit", choices=["meters", "seconds"], default="meters",
                   help="unit of the toa column (seconds are converted via c)")
    p.add_argument("--epoch-tol", type=float, default=1e-3,
                   help="timestamps within this many seconds share an epoch")


def _cmd_simulate(args) -> int:
    scenario = load_scenario(args.scenario)
    if args.seed is not None:
        scenario.seed = args.seed
    session = generate(scenario)
    os.makedirs(args.out_dir, exist_ok=True)
    write_toa_csv(session.epochs, os.path.join(args.out_dir, "toa.csv"))
    session.catalog.to_csv(os.path.join(args.out_dir, "nodes.csv"))
    write_trajectory_csv(session.trajectory, os.path.join(args.out_dir, "trajectory.csv"))
    truth_ref = args.truth_ref or session.catalog.ids()[0]
    write_dtb(session.truth_dtb(truth_ref), os.path.join(args.out_dir, "truth_dtb.csv"))
    _write_manifest(args.out_dir, "simulate", args, is_dir=True)
    return 0


def _cmd_fit_noise(args) -> int:
    epochs = load_toa_epochs(args.toa, args.unit, args.epoch_tol)
    points = estimate_noise_points(epochs, window=args.window,
                                   rsrp_bin_width=args.bin)
    model = fit_noise_model(points)
    write_noise_model(model, args.out)
    if args.points:
        write_noise_points(points, args.points)
    _write_manifest(args.out, "fit-noise", args)
    print(f"fitted noise model k={model.k:.3f} rsrp0={model.rsrp0:.2f} "
          f"from {len(points)} points", file=sys.stderr)
    return 0


def _cmd_calibrate(args) -> int:
    epochs, catalog, traj = load_session(args.toa, args.nodes, args.traj,
                                         args.unit, args.epoch_tol)
    ref = select_reference(epochs, args.ref_node)
    samples = []
    for epoch in epochs:
        if not traj.covers(epoch.time):
            continue
        try:
            tdoa = form_tdoa(epoch, ref)
        except ReferenceMissing:
            # drop policy: epochs without the reference node are excluded to
            # keep the whole table tied to a single reference
            continue
        rover = traj.interpolate(epoch.time)
        samples.extend(instantaneous_dtb(o, rover, catalog) for o in tdoa)
    if not samples:
        raise ReferenceMissing(
            f"reference node {ref!r} never observed within the trajectory span")
    table = aggregate_dtb(samples, session=args.session, trim_sigma=args.trim_sigma)
    write_dtb(table, args.out)
    if args.samples:
        with open(args.samples, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["time", "node_id", "ref_node", "dtb_m"])
            for s in samples:
                writer.writerow([repr(s.epoch), s.node_id, s.ref_node_id, repr(s.value)])
    _write_manifest(args.out, "calibrate", args)
    print(f"calibrated {len(table.entries)} nodes against reference {ref!r} "
          f"from {len(samples)} samples", file=sys.stderr)
    return 0


def _cmd_position(args) -> int:
    epochs = load_toa_epochs(args.toa, args.unit, args.epoch_tol)
    catalog = NodeCatalog.from_csv(args.nodes)
    dtb = read_dtb(args.dtb)
    noise = read_noise_model(args.noise)
    cfg = EkfConfig(sigma_x=args.sigma_x, sigma_y=args.sigma_y,
                    min_obs_per_update=args.min_obs,
                    innovation_gate=args.gate,
                    default_sigma=args.default_sigma)
    results = run_filter(epochs, dtb, catalog, noise, cfg)
    write_track_csv(results, args.out)
    write_residuals_csv(results, args.residuals)
    _write_manifest(args.out, "position", args)
    n_upd = sum(1 for r in results if r.accepted_obs > 0)
    print(f"filtered {len(results)} epochs ({n_upd} with updates)", file=sys.stderr)
    return 0


def _cmd_evaluate(args) -> int:
    track = read_track_csv(args.track)
    traj = load_trajectory(args.traj)
    residuals = [v for _, _, v in read_residuals_csv(args.residuals)]
    metrics = session_metrics(track, traj, residuals)
    write_metrics_json(metrics, args.out)
    if args.residual_hist:
        _write_residual_hist(residuals, args.residual_hist)
    _write_manifest(args.out, "evaluate", args)
    print(f"true error mean {metrics.true_error_mean:.3f} m, "
          f"formal {metrics.sigma_formal:.3f} m, "
          f"postfits {metrics.sigma_postfits:.3f} m", file=sys.stderr)
    return 0


def _write_residual_hist(residuals: list[float], path) -> None:
    """Plot-ready histogram of postfit residuals with fixed 0.25 m bins."""
    counts: dict[int, int] = {}
    for v in residuals:
        idx = int(math.floor(v / RESIDUAL_HIST_BIN_M))
        counts[idx] = counts.get(idx, 0) + 1
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["bin_left_m", "bin_right_m", "count"])
        for idx in sorted(counts):
            writer.writerow([repr(idx * RESIDUAL_HIST_BIN_M),
                             repr((idx + 1) * RESIDUAL_HIST_BIN_M), counts[idx]])


def _cmd_rereference(args) -> int:
    table = rereference_dtb(read_dtb(args.dtb), args.new_ref)
    write_dtb(table, args.out)
    _write_manifest(args.out, "rereference", args)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tdoa-dtb",
                     description="DTB calibration and TDoA Kalman positioning")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic session from a scenario file")
    p.add_argument("--scenario", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    p.add_argument("--truth-ref", default=None,
                   help="reference node for truth_dtb.csv (default: first node)")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("fit-noise", help="fit the received-power noise model")
    p.add_argument("--toa", required=True)
    p.add_argument("--window", type=float, default=2.0, help="detrend window, s")
    p.add_argument("--bin", type=float, default=2.0, help="rsrp bin width, dB")
    p.add_argument("--out", required=True)
    p.add_argument("--points", default=None, help="optional scatter CSV output")
    _add_session_flags(p)
    p.set_defaults(func=_cmd_fit_noise)

    p = sub.add_parser("calibrate", help="estimate a DTB table from a reference track")
    p.add_argument("--toa", required=True)
    p.add_argument("--nodes", required=True)
    p.add_argument("--traj", required=True)
    p.add_argument("--ref-node", default="auto",
                   help="'auto' picks the most visible node; epochs missing the "
                        "reference are dropped")
    p.add_argument("--out", required=True)
    p.add_argument("--session", default="", help="session label stored in the table")
    p.add_argument("--trim-sigma", type=float, default=None,
                   help="optional outlier trim factor (off by default)")
    p.add_argument("--samples", default=None, help="optional DTB time-series CSV output")
    _add_session_flags(p)
    p.set_defaults(func=_cmd_calibrate)

    p = sub.add_parser("position", help="run the TDoA filter with DTB corrections")
    p.add_argument("--toa", required=True)
    p.add_argument("--nodes", required=True)
    p.add_argument("--dtb", required=True)
    p.add_argument("--noise", required=True)
    p.add_argument("--traj", default=None,
                   help="accepted for symmetry; positioning does not use it")
    p.add_argument("--out", required=True, help="track CSV output")
    p.add_argument("--residuals", required=True, help="postfit residual CSV output")
    p.add_argument("--sigma-x", type=float, default=0.5)
    p.add_argument("--sigma-y", type=float, default=0.5)
    p.add_argument("--gate", type=float, default=5.0)
    p.add_argument("--min-obs", type=int, default=1)
    p.add_argument("--default-sigma", type=float, default=3.0)
    _add_session_flags(p)
    p.set_defaults(func=_cmd_position)

    p = sub.add_parser("evaluate", help="compute session metrics from a track")
    p.add_argument("--track", required=True)
    p.add_argument("--traj", required=True)
    p.add_argument("--residuals", required=True)
    p.add_argument("--out", required=True, help="metrics JSON output")
    p.add_argument("--residual-hist", default=None,
                   help="optional residual histogram CSV (0.25 m bins)")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("rereference", help="switch a DTB table to another reference node")
    p.add_argument("--dtb", required=True)
    p.add_argument("--new-ref", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_rereference)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code is not None else 0
    try:
        return args.func(args)
    except TdoaDtbError as exc:
        print(f"tdoa-dtb {args.subcommand}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"tdoa-dtb {args.subcommand}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
