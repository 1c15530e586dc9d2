"""Scenario runner: the deterministic interleaving of firmware, physics,
vision and control on a virtual clock.

Three logical periodic tasks share the timeline: the 500 Hz firmware loop,
the 24 fps vision task, and the controller invoked once per tracked frame.
In headless mode they are driven synchronously; tick i lands at i/500 s and
frame k at k/24 s, compared in integer arithmetic so the interleaving is
exact and repeatable.
"""

import csv
import io
import math
import time
from dataclasses import dataclass
from typing import Callable, List, Optional, Tuple

import numpy as np

from . import control, dynamics, vision
from .control import (
    FreqSearchState,
    OrientationState,
    PathEvent,
    Trajectory,
    freq_search_step,
    joystick_map,
    orientation_step,
    path_follow_step,
)
from .field_synth import FieldCommand, FirmwareEmulator, PwmFrame
from .scenario import ControllerKind, Scenario
from .vision import MaskParams, Optics, Track

TELEMETRY_FLOAT_FMT = "%.6g"


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return TELEMETRY_FLOAT_FMT % value
    return str(value)


def telemetry_header(n_tracks: int) -> List[str]:
    cols = ["frame_index", "time_s"]
    for i in range(n_tracks):
        cols += [f"track{i}_x_px", f"track{i}_y_px", f"track{i}_v_um_s", f"track{i}_size_px"]
    cols += ["crop_length", "blur", "dilation", "lower_thresh", "upper_thresh"]
    cols += ["mode", "alpha_deg", "gamma_deg", "freq_hz", "duty_x", "duty_y", "duty_z"]
    cols += ["acoustic_hz"]
    return cols


def telemetry_row(
    frame_index: int,
    t: float,
    tracks: List[Track],
    mask: MaskParams,
    cmd: FieldCommand,
    pwm: PwmFrame,
    acoustic_hz: float,
) -> List[str]:
    row = [_fmt(frame_index), _fmt(t)]
    for tr in tracks:
        row += [
            _fmt(tr.centroid[0]),
            _fmt(tr.centroid[1]),
            _fmt(tr.velocity),
            _fmt(tr.size_px),
        ]
    row += [
        _fmt(mask.crop_length),
        _fmt(mask.blur),
        _fmt(mask.dilation),
        _fmt(mask.lower_thresh),
        _fmt(mask.upper_thresh),
    ]
    row += [
        cmd.mode.value,
        _fmt(cmd.alpha),
        _fmt(cmd.gamma),
        _fmt(cmd.freq),
        _fmt(pwm.duty_x),
        _fmt(pwm.duty_y),
        _fmt(pwm.duty_z),
    ]
    row += [_fmt(acoustic_hz)]
    return row


def telemetry_write(rows: List[List[str]], header: List[str], path) -> None:
    """RFC-4180-style CSV with the fixed documented header."""
    try:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(header)
            w.writerows(rows)
    except OSError as e:
        raise OSError(f"cannot write telemetry to {path}: {e}") from e


def telemetry_dumps(rows: List[List[str]], header: List[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def serial_roundtrip(cmd: FieldCommand) -> FieldCommand:
    """Encode to the line protocol and decode back (identity at 4 decimals)."""
    from .field_synth import decode_command, encode_command

    return decode_command(encode_command(cmd))


@dataclass
class RunSummary:
    scenario: str
    frames: int
    sim_time_s: float
    completed: bool
    completion_time_s: Optional[float]
    mean_speed_um_s: Optional[float]
    mean_cross_track_error_um: Optional[float]
    success: bool


def _point_segment_distance(p, a, b) -> float:
    ax, ay = a
    bx, by = b
    px, py = p
    dx, dy = bx - ax, by - ay
    seg2 = dx * dx + dy * dy
    if seg2 == 0:
        return math.hypot(px - ax, py - ay)
    t = max(0.0, min(1.0, ((px - ax) * dx + (py - ay) * dy) / seg2))
    return math.hypot(px - (ax + t * dx), py - (ay + t * dy))


def cross_track_error(p: Tuple[float, float], nodes) -> float:
    """Distance from p to the closed polyline through the trajectory nodes."""
    n = len(nodes)
    if n == 1:
        return math.hypot(p[0] - nodes[0][0], p[1] - nodes[0][1])
    return min(
        _point_segment_distance(p, nodes[k], nodes[(k + 1) % n]) for k in range(n)
    )


class _PathFollowController:
    def __init__(self, scenario: Scenario):
        self.traj: Trajectory = scenario.trajectory
        self.freq = scenario.field_cmd.freq or control.DEFAULT_PATH_FREQ_HZ
        self.gamma = scenario.field_cmd.gamma

    def on_frame(self, engine: "Engine") -> None:
        track = engine.tracked()[0]
        p = engine.optics.px_to_world(*track.centroid)
        result = path_follow_step(self.traj, p, freq=self.freq, gamma=self.gamma)
        if result is PathEvent.DONE:
            engine.firmware.post(FieldCommand.off())
            engine.finish()
        elif result is PathEvent.ADVANCED:
            pass  # previous command stays latched this frame
        else:
            engine.firmware.post(result)


class _DualActuationController:
    """Frequency search for propulsion plus orientation steering to a target."""

    def __init__(self, scenario: Scenario):
        ac = scenario.acoustic
        self.search = FreqSearchState(
            f_min=ac.f_min_hz, f_max=ac.f_max_hz, v_min=ac.v_min, v_max=ac.v_max
        )
        self.orient = OrientationState(target=ac.target)
        self.target = ac.target
        self.threshold = ac.target_threshold_um
        self.z_bias = ac.z_bias

    def on_frame(self, engine: "Engine") -> None:
        track = engine.tracked()[0]
        p = engine.optics.px_to_world(*track.centroid)
        if math.hypot(p[0] - self.target[0], p[1] - self.target[1]) < self.threshold:
            engine.acoustic_f = 0.0
            engine.firmware.post(FieldCommand.off())
            engine.finish()
            return
        v_mag = track.velocity if track.velocity is not None else 0.0
        engine.acoustic_f = freq_search_step(self.search, v_mag)
        # instantaneous direction pairs with the field that produced it; the
        # windowed velocity would lag the heading by most of a second
        cmd = orientation_step(
            self.orient, p, track.instant_direction(), z_bias=self.z_bias
        )
        engine.firmware.post(cmd)


class _OpenLoopController:
    def __init__(self, scenario: Scenario):
        self.cmd = scenario.field_cmd
        self.sent = False

    def on_frame(self, engine: "Engine") -> None:
        if not self.sent:
            engine.firmware.post(self.cmd)
            self.sent = True


class _ManualController:
    """Holds the latest joystick-derived command; driven from the UI channel."""

    def __init__(self, scenario: Scenario):
        self.last = scenario.field_cmd

    def apply_joystick(self, engine: "Engine", inp: control.JoystickInput) -> FieldCommand:
        self.last = joystick_map(inp, self.last)
        engine.firmware.post(self.last)
        return self.last

    def on_frame(self, engine: "Engine") -> None:
        pass


def _make_controller(scenario: Scenario):
    if scenario.controller is ControllerKind.PATH_FOLLOW:
        return _PathFollowController(scenario)
    if scenario.controller is ControllerKind.FREQ_SEARCH:
        return _DualActuationController(scenario)
    if scenario.controller is ControllerKind.MANUAL:
        return _ManualController(scenario)
    return _OpenLoopController(scenario)


class Engine:
    """Owns the world and drives one scenario to completion."""

    def __init__(
        self,
        scenario: Scenario,
        dump_frames_dir: Optional[str] = None,
        pace_s: float = 0.0,
    ):
        scenario.validate()
        self.scenario = scenario
        self.optics: Optics = scenario.optics
        self.firmware = FirmwareEmulator(variant=scenario.waveform_variant)
        self.world = dynamics.World(
            robots=scenario.build_robot_states(),
            seed=scenario.seed,
            jitter_sigma_um=scenario.jitter_sigma_um,
        )
        self.controller = _make_controller(scenario)
        self.acoustic_f = 0.0
        self.tracks: List[Tuple[int, Track]] = []
        for idx, spec in enumerate(scenario.robots):
            if spec.track:
                x, y = self.optics.world_to_px(spec.x_um, spec.y_um)
                self.tracks.append((idx, Track.from_click(x, y, scenario.mask)))
        self.rows: List[List[str]] = []
        self.header = telemetry_header(len(self.tracks))
        self.dump_frames_dir = dump_frames_dir
        self.pace_s = pace_s
        self.listeners: List[Callable[[dict], None]] = []
        self.last_pwm = PwmFrame(0.0, 0.0, 0.0, t=0.0)
        self.tick_count = 0
        self.frame_index = 0
        self.completed = False
        self.completion_time_s: Optional[float] = None
        self._stop = False
        self.loop_rate = self.firmware.clock.loop_rate
        self._cross_track: List[float] = []

    def tracked(self) -> List[Track]:
        return [t for _, t in self.tracks]

    def finish(self) -> None:
        if not self.completed:
            self.completed = True
            self.completion_time_s = self.frame_index / self.optics.fps

    def stop(self) -> None:
        self._stop = True

    def post_joystick(self, inp: control.JoystickInput) -> Optional[FieldCommand]:
        if isinstance(self.controller, _ManualController):
            return self.controller.apply_joystick(self, inp)
        return None

    def _advance_firmware_to(self, frame_k: int) -> None:
        # ticks i with i/loop_rate <= frame_k/fps, in integers to avoid drift
        fps = self.optics.fps
        dt = 1.0 / self.loop_rate
        while (self.tick_count + 1) * fps <= frame_k * self.loop_rate:
            self.last_pwm = self.firmware.step()
            dynamics.step(self.world, self.firmware.active, self.acoustic_f, dt)
            self.tick_count += 1

    def _vision_frame(self) -> None:
        k = self.frame_index
        frame = None
        if self.tracks or self.dump_frames_dir:
            frame = vision.render_frame(self.world, self.optics, k)
        if self.dump_frames_dir:
            vision.write_pgm(frame, f"{self.dump_frames_dir}/frame_{k:06d}.pgm")
        for _, track in self.tracks:
            vision.update_track(track, frame, self.optics)
        self.controller.on_frame(self)
        if self.scenario.trajectory is not None and self.tracks:
            p = self.optics.px_to_world(*self.tracks[0][1].centroid)
            self._cross_track.append(
                cross_track_error(p, self.scenario.trajectory.nodes)
            )
        self.rows.append(
            telemetry_row(
                k,
                k / self.optics.fps,
                self.tracked(),
                self.scenario.mask,
                self.firmware.active,
                self.last_pwm,
                self.acoustic_f,
            )
        )
        snapshot = self.snapshot()
        for listener in self.listeners:
            listener(snapshot)

    def snapshot(self) -> dict:
        cmd = self.firmware.active
        return {
            "type": "telemetry",
            "v": 1,
            "frame": self.frame_index,
            "time": self.frame_index / self.optics.fps,
            "tracks": [
                {
                    "x": t.centroid[0],
                    "y": t.centroid[1],
                    "v": t.velocity,
                    "size": t.size_px,
                    "stale": t.stale,
                }
                for t in self.tracked()
            ],
            "field": {
                "mode": cmd.mode.value,
                "alpha": cmd.alpha,
                "gamma": cmd.gamma,
                "freq": cmd.freq,
                "duty": [self.last_pwm.duty_x, self.last_pwm.duty_y, self.last_pwm.duty_z],
            },
            "acoustic_hz": self.acoustic_f,
            "done": self.completed,
        }

    def run(self) -> RunSummary:
        n_frames = int(round(self.scenario.duration_s * self.optics.fps))
        for k in range(n_frames):
            if self._stop:
                break
            self.frame_index = k
            self._advance_firmware_to(k)
            self._vision_frame()
            if self.completed:
                break
            if self.pace_s > 0:
                time.sleep(self.pace_s)
        end = {
            "type": "run_complete",
            "v": 1,
            "frames": len(self.rows),
            "completed": self.completed,
        }
        for listener in self.listeners:
            listener(end)
        return self.summary()

    def summary(self) -> RunSummary:
        speeds = []
        if self.tracks:
            col = 4  # track0 velocity column
            for row in self.rows:
                if row[col] != "":
                    speeds.append(float(row[col]))
        mean_speed = float(np.mean(speeds)) if speeds else None
        mean_xte = float(np.mean(self._cross_track)) if self._cross_track else None
        needs_completion = self.scenario.controller in (
            ControllerKind.PATH_FOLLOW,
            ControllerKind.FREQ_SEARCH,
        )
        success = self.completed if needs_completion else True
        return RunSummary(
            scenario=self.scenario.name,
            frames=len(self.rows),
            sim_time_s=len(self.rows) / self.optics.fps,
            completed=self.completed,
            completion_time_s=self.completion_time_s,
            mean_speed_um_s=mean_speed,
            mean_cross_track_error_um=mean_xte,
            success=success,
        )


def run_scenario(
    scenario: Scenario,
    out_csv: Optional[str] = None,
    dump_frames_dir: Optional[str] = None,
) -> RunSummary:
    """Run a scenario headless on the virtual clock and export telemetry."""
    engine = Engine(scenario, dump_frames_dir=dump_frames_dir)
    summary = engine.run()
    if out_csv:
        telemetry_write(engine.rows, engine.header, out_csv)
    return summary
