"""Command line front end.

  microtwin run <scenario.ini> [--seed N] [--realtime] [--serve PORT]
                [--dump-frames DIR] [--out CSV]
  microtwin calibrate-plot [--out DIR]

Bare scenario names are also resolved against $MICROTWIN_SCENARIO_DIR.
Exit code 0 means the scenario met its success criteria.
"""

import argparse
import csv
import os
import sys

import numpy as np

from . import coil_model, dynamics
from .field_synth import PwmFrame
from .harness import run_scenario
from .scenario import parse_scenario, resolve_scenario_path


def _cmd_run(args) -> int:
    path = resolve_scenario_path(args.scenario)
    scenario = parse_scenario(path, seed_override=args.seed)
    if args.serve:
        from .server import serve_ui

        # interactive serving always paces the loop to wall time
        pace = 1.0 / scenario.optics.fps
        static = os.path.join(os.path.dirname(__file__), "..", "..", "frontend", "dist")
        serve_ui(
            scenario,
            port=args.serve,
            pace_s=pace,
            static_dir=static if os.path.isdir(static) else None,
        )
        return 0
    if args.realtime:
        from .harness import Engine, telemetry_write

        engine = Engine(scenario, dump_frames_dir=args.dump_frames,
                        pace_s=1.0 / scenario.optics.fps)
        summary = engine.run()
        if args.out:
            telemetry_write(engine.rows, engine.header, args.out)
    else:
        summary = run_scenario(scenario, out_csv=args.out, dump_frames_dir=args.dump_frames)
    print(f"scenario      : {summary.scenario}")
    print(f"frames        : {summary.frames}")
    print(f"sim time      : {summary.sim_time_s:.3f} s")
    print(f"completed     : {summary.completed}")
    if summary.completion_time_s is not None:
        print(f"completed at  : {summary.completion_time_s:.3f} s")
    if summary.mean_speed_um_s is not None:
        print(f"mean speed    : {summary.mean_speed_um_s:.2f} um/s")
    if summary.mean_cross_track_error_um is not None:
        print(f"mean path err : {summary.mean_cross_track_error_um:.3f} um")
    return 0 if summary.success else 1


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(header)
        w.writerows(rows)


def _cmd_calibrate_plot(args) -> int:
    """Dump the characterization curves (field vs voltage/duty, speed vs
    frequency, acoustic response) as CSV files for plotting."""
    outdir = args.out
    os.makedirs(outdir, exist_ok=True)
    calib = coil_model.load_calibration()

    rows = []
    for v in np.arange(0.0, 27.001, 0.5):
        b = coil_model.max_field(calib, float(v))
        rows.append([f"{v:g}", f"{b[0]:.4f}", f"{b[1]:.4f}", f"{b[2]:.4f}"])
    _write_csv(os.path.join(outdir, "field_vs_voltage.csv"),
               ["voltage_V", "bx_mT", "by_mT", "bz_mT"], rows)

    for voltage in (12.0, 24.0):
        rows = []
        for d in np.arange(0.0, 1.0001, 0.05):
            frame = PwmFrame(float(d), float(d), float(d), t=0.0)
            b = coil_model.field_from_duty(calib, voltage, frame)
            rows.append([f"{d:g}", f"{b[0]:.4f}", f"{b[1]:.4f}", f"{b[2]:.4f}"])
        _write_csv(os.path.join(outdir, f"field_vs_duty_{int(voltage)}V.csv"),
                   ["duty", "bx_mT", "by_mT", "bz_mT"], rows)

    rows = []
    for f in np.arange(0.0, 100.001, 1.0):
        v12 = dynamics.rolling_speed(float(f), dynamics.ROLLING_12V)
        v24 = dynamics.rolling_speed(float(f), dynamics.ROLLING_24V)
        rows.append([f"{f:g}", f"{v12:.3f}", f"{v24:.3f}"])
    _write_csv(os.path.join(outdir, "rolling_speed.csv"),
               ["freq_hz", "speed_12V_um_s", "speed_24V_um_s"], rows)

    rows = []
    for f in np.arange(0.0, 3.0e6 + 1, 10e3):
        s = dynamics.acoustic_speed(float(f), dynamics.DEFAULT_ACOUSTIC_RESPONSE)
        rows.append([f"{f:g}", f"{s:.3f}"])
    _write_csv(os.path.join(outdir, "acoustic_response.csv"),
               ["freq_hz", "speed_um_s"], rows)

    print(f"wrote characterization curves to {outdir}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="microtwin", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario file")
    p_run.add_argument("scenario")
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--realtime", action="store_true",
                       help="pace the loop to wall time instead of free-running")
    p_run.add_argument("--serve", type=int, metavar="PORT", default=None,
                       help="expose the websocket UI service on PORT")
    p_run.add_argument("--dump-frames", metavar="DIR", default=None,
                       help="write rendered frames as numbered PGM files")
    p_run.add_argument("--out", metavar="CSV", default=None,
                       help="telemetry CSV path")
    p_run.set_defaults(func=_cmd_run)

    p_cal = sub.add_parser("calibrate-plot", help="export characterization curves")
    p_cal.add_argument("--out", default="calibration_curves")
    p_cal.set_defaults(func=_cmd_calibrate_plot)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
