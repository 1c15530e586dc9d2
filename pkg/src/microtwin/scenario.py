"""Scenario files: the key-value configs that describe a runnable experiment.

INI syntax (configparser).  Sections:

  [scenario]    name, duration (s), voltage (V), controller, seed,
                waveform_variant (equation|loop)
  [field]       initial/open-loop command: mode, alpha, gamma, freq,
                amplitude, z_bias, gradient_axis
  [optics]      um_per_px or magnification, frame_width, frame_height, fps
  [mask]        crop_length, blur, dilation, lower, upper
  [robot.N]     kind (roller|acoustic_cup|passive), radius_um, x_um, y_um,
                k_roll, f_stepout, misalign_deg, track (bool)
  [trajectory]  shape=circle with center_x/center_y/radius_um/nodes, or
                nodes = "x,y; x,y; ..."; threshold_um
  [acoustic]    f_min_hz, f_max_hz, v_min, v_max, peaks ("c:w:v, ..."),
                target_x, target_y, target_threshold_um, z_bias
  [jitter]      sigma_um

controller is one of: path_follow, freq_search, manual, open_loop.
"""

import configparser
import math
import os
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Tuple

from .control import Trajectory, circle_nodes
from .dynamics import (
    AcousticPeak,
    AcousticResponse,
    RobotKind,
    RobotState,
    RollingParams,
    rolling_params_for_voltage,
)
from .field_synth import FieldCommand, FieldMode, GradientAxis
from .vision import MaskParams, Optics

SCENARIO_DIR_ENV = "MICROTWIN_SCENARIO_DIR"


class ScenarioError(ValueError):
    """Scenario file is malformed or internally inconsistent."""


class ControllerKind(Enum):
    PATH_FOLLOW = "path_follow"
    FREQ_SEARCH = "freq_search"
    MANUAL = "manual"
    OPEN_LOOP = "open_loop"


_FIELD_MODES = {
    "rotating_roll": FieldMode.ROTATING_ROLL,
    "rotating_swim": FieldMode.ROTATING_SWIM,
    "uniform": FieldMode.UNIFORM,
    "gradient": FieldMode.GRADIENT,
    "off": FieldMode.OFF,
}


@dataclass
class RobotSpec:
    kind: RobotKind
    radius_um: float
    x_um: float
    y_um: float
    k_roll: Optional[float] = None
    f_stepout: Optional[float] = None
    misalign_deg: float = 0.0
    track: bool = False


@dataclass
class AcousticConfig:
    f_min_hz: float
    f_max_hz: float
    v_min: float
    v_max: float
    peaks: List[AcousticPeak]
    target: Tuple[float, float]
    target_threshold_um: float = 10.0
    z_bias: float = 0.0

    def response(self) -> AcousticResponse:
        return AcousticResponse(peaks=list(self.peaks))


@dataclass
class Scenario:
    name: str
    duration_s: float
    voltage: float
    controller: ControllerKind
    seed: int
    robots: List[RobotSpec]
    optics: Optics
    mask: MaskParams
    field_cmd: FieldCommand
    trajectory: Optional[Trajectory] = None
    acoustic: Optional[AcousticConfig] = None
    jitter_sigma_um: float = 0.0
    waveform_variant: str = "equation"

    def validate(self) -> "Scenario":
        if self.duration_s <= 0:
            raise ScenarioError("duration must be positive")
        if not self.robots:
            raise ScenarioError("scenario needs at least one robot")
        if self.controller is ControllerKind.PATH_FOLLOW:
            if self.trajectory is None:
                raise ScenarioError("path_follow controller needs a [trajectory]")
            if not any(r.track and r.kind is RobotKind.ROLLER for r in self.robots):
                raise ScenarioError("path_follow needs a tracked roller")
        if self.controller is ControllerKind.FREQ_SEARCH:
            if self.acoustic is None:
                raise ScenarioError("freq_search controller needs an [acoustic] section")
            if not any(r.track and r.kind is RobotKind.ACOUSTIC_CUP for r in self.robots):
                raise ScenarioError("freq_search needs a tracked acoustic_cup")
        return self

    def build_robot_states(self) -> List[RobotState]:
        states = []
        response = self.acoustic.response() if self.acoustic else None
        for spec in self.robots:
            rolling = None
            if spec.kind is RobotKind.ROLLER:
                if spec.k_roll is not None and spec.f_stepout is not None:
                    rolling = RollingParams(
                        radius_um=spec.radius_um,
                        k_roll=spec.k_roll,
                        f_stepout=spec.f_stepout,
                    )
                else:
                    rolling = rolling_params_for_voltage(self.voltage, spec.radius_um)
            states.append(
                RobotState(
                    kind=spec.kind,
                    x=spec.x_um,
                    y=spec.y_um,
                    radius_um=spec.radius_um,
                    rolling=rolling,
                    acoustic=response if spec.kind is RobotKind.ACOUSTIC_CUP else None,
                    misalign=math.radians(spec.misalign_deg),
                )
            )
        return states


def resolve_scenario_path(name: str) -> str:
    """Use the path as given, else look in $MICROTWIN_SCENARIO_DIR."""
    if os.path.exists(name):
        return name
    base = os.environ.get(SCENARIO_DIR_ENV)
    if base:
        candidate = os.path.join(base, name)
        if os.path.exists(candidate):
            return candidate
    raise ScenarioError(f"scenario file not found: {name}")


def _parse_peaks(text: str) -> List[AcousticPeak]:
    peaks = []
    for chunk in text.split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        parts = chunk.split(":")
        if len(parts) != 3:
            raise ScenarioError(f"bad peak spec {chunk!r}, want center:width:speed")
        peaks.append(AcousticPeak(float(parts[0]), float(parts[1]), float(parts[2])))
    return peaks


def _parse_nodes(text: str) -> List[Tuple[float, float]]:
    nodes = []
    for chunk in text.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        xy = chunk.split(",")
        if len(xy) != 2:
            raise ScenarioError(f"bad node {chunk!r}, want x,y")
        nodes.append((float(xy[0]), float(xy[1])))
    return nodes


def parse_scenario(path: str, seed_override: Optional[int] = None) -> Scenario:
    cp = configparser.ConfigParser()
    read = cp.read(path)
    if not read:
        raise ScenarioError(f"cannot read scenario file {path}")
    if "scenario" not in cp:
        raise ScenarioError("missing [scenario] section")
    sc = cp["scenario"]
    try:
        controller = ControllerKind(sc.get("controller", "open_loop"))
    except ValueError:
        raise ScenarioError(f"unknown controller {sc.get('controller')!r}") from None

    fld = cp["field"] if "field" in cp else {}
    mode_name = fld.get("mode", "off")
    if mode_name not in _FIELD_MODES:
        raise ScenarioError(f"unknown field mode {mode_name!r}")
    axis_name = fld.get("gradient_axis", "")
    field_cmd = FieldCommand(
        mode=_FIELD_MODES[mode_name],
        alpha=float(fld.get("alpha", 0.0)),
        gamma=float(fld.get("gamma", 90.0)),
        freq=float(fld.get("freq", 0.0)),
        amplitude=float(fld.get("amplitude", 1.0)),
        gradient_axis=GradientAxis(axis_name) if axis_name else None,
        z_bias=float(fld.get("z_bias", 0.0)),
    )

    opt = cp["optics"] if "optics" in cp else {}
    um_per_px = opt.get("um_per_px")
    optics = Optics(
        magnification=float(opt.get("magnification", 10.0)),
        um_per_px=float(um_per_px) if um_per_px else None,
        frame_width=int(opt.get("frame_width", 2448)),
        frame_height=int(opt.get("frame_height", 2048)),
        fps=float(opt.get("fps", 24.0)),
    )

    msk = cp["mask"] if "mask" in cp else {}
    mask = MaskParams(
        crop_length=int(msk.get("crop_length", 48)),
        blur=int(msk.get("blur", 1)),
        dilation=int(msk.get("dilation", 0)),
        lower_thresh=int(msk.get("lower", 100)),
        upper_thresh=int(msk.get("upper", 255)),
    )

    robots = []
    for section in sorted(s for s in cp.sections() if s.startswith("robot.")):
        rb = cp[section]
        kind_name = rb.get("kind", "roller")
        try:
            kind = RobotKind(kind_name)
        except ValueError:
            raise ScenarioError(f"{section}: unknown robot kind {kind_name!r}") from None
        robots.append(
            RobotSpec(
                kind=kind,
                radius_um=float(rb.get("radius_um", 10.0)),
                x_um=float(rb.get("x_um", 0.0)),
                y_um=float(rb.get("y_um", 0.0)),
                k_roll=float(rb["k_roll"]) if "k_roll" in rb else None,
                f_stepout=float(rb["f_stepout"]) if "f_stepout" in rb else None,
                misalign_deg=float(rb.get("misalign_deg", 0.0)),
                track=rb.getboolean("track", fallback=False),
            )
        )

    trajectory = None
    if "trajectory" in cp:
        tr = cp["trajectory"]
        threshold = float(tr.get("threshold_um", 5.0))
        if tr.get("shape", "") == "circle":
            nodes = circle_nodes(
                (float(tr.get("center_x", 0.0)), float(tr.get("center_y", 0.0))),
                float(tr["radius_um"]),
                int(tr.get("nodes", 100)),
            )
        elif "nodes" in tr:
            nodes = _parse_nodes(tr["nodes"])
        else:
            raise ScenarioError("[trajectory] needs shape=circle or explicit nodes")
        trajectory = Trajectory(nodes=nodes, threshold_um=threshold)

    acoustic = None
    if "acoustic" in cp:
        ac = cp["acoustic"]
        acoustic = AcousticConfig(
            f_min_hz=float(ac.get("f_min_hz", 0.5e6)),
            f_max_hz=float(ac.get("f_max_hz", 1.5e6)),
            v_min=float(ac.get("v_min", 50.0)),
            v_max=float(ac.get("v_max", 1e9)),
            peaks=_parse_peaks(ac.get("peaks", "")),
            target=(float(ac.get("target_x", 0.0)), float(ac.get("target_y", 0.0))),
            target_threshold_um=float(ac.get("target_threshold_um", 10.0)),
            z_bias=float(ac.get("z_bias", 0.0)),
        )

    jitter = 0.0
    if "jitter" in cp:
        jitter = float(cp["jitter"].get("sigma_um", 0.0))

    seed = int(sc.get("seed", 0))
    if seed_override is not None:
        seed = seed_override

    scenario = Scenario(
        name=sc.get("name", os.path.splitext(os.path.basename(path))[0]),
        duration_s=float(sc.get("duration", 10.0)),
        voltage=float(sc.get("voltage", 12.0)),
        controller=controller,
        seed=seed,
        robots=robots,
        optics=optics,
        mask=mask,
        field_cmd=field_cmd,
        trajectory=trajectory,
        acoustic=acoustic,
        jitter_sigma_um=jitter,
        waveform_variant=sc.get("waveform_variant", "equation"),
    )
    return scenario.validate()
