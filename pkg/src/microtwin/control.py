"""Closed-loop controllers and the manual command mapping.

All controllers are pure state-transition functions: the harness calls them
once per tracked camera frame and forwards any emitted FieldCommand to the
firmware channel.
"""

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Tuple, Union

import numpy as np

from .field_synth import FieldCommand, FieldMode

DEFAULT_PATH_FREQ_HZ = 10.0
DEFAULT_PATH_GAMMA_DEG = 90.0
FREQ_INCREMENT_INIT_HZ = 0.1e6      # coarse sweep step
FREQ_BACKOFF_HZ = 0.075e6           # step down when the robot overshoots v_max
FREQ_INCREMENT_FLOOR_HZ = 1e3       # keeps repeated refinement from underflowing
JOYSTICK_DEADZONE = 0.1


class PathEvent(Enum):
    ADVANCED = "advanced"   # node reached; previous field command stays latched
    DONE = "done"


def _wrap360(angle_deg: float) -> float:
    # x % 360.0 can round to exactly 360.0 for tiny negative x
    a = angle_deg % 360.0
    return 0.0 if a >= 360.0 else a


@dataclass
class Trajectory:
    """Ordered waypoints in workspace um plus the arrival threshold."""

    nodes: List[Tuple[float, float]]
    threshold_um: float
    i: int = 0

    def __post_init__(self):
        if not self.nodes:
            raise ValueError("trajectory needs at least one node")
        if self.threshold_um <= 0:
            raise ValueError("threshold must be positive")

    @property
    def remaining(self) -> int:
        return len(self.nodes) - self.i


def circle_nodes(
    center: Tuple[float, float], radius_um: float, count: int
) -> List[Tuple[float, float]]:
    """Closed circular path: nodes 1..count, ending back at angle 0."""
    cx, cy = center
    return [
        (
            cx + radius_um * math.cos(2.0 * math.pi * k / count),
            cy + radius_um * math.sin(2.0 * math.pi * k / count),
        )
        for k in range(1, count + 1)
    ]


def path_follow_step(
    traj: Trajectory,
    p: Tuple[float, float],
    freq: float = DEFAULT_PATH_FREQ_HZ,
    gamma: float = DEFAULT_PATH_GAMMA_DEG,
    amplitude: float = 1.0,
) -> Union[FieldCommand, PathEvent]:
    """Error-minimizing waypoint chase.

    Within the threshold of the current node the index advances and no new
    field is emitted this step; otherwise the rolling heading alpha points
    straight at the node.
    """
    if traj.i >= len(traj.nodes):
        return PathEvent.DONE
    xi, yi = traj.nodes[traj.i]
    px, py = p
    error = math.hypot(xi - px, yi - py)
    if error < traj.threshold_um:
        traj.i += 1
        return PathEvent.DONE if traj.i >= len(traj.nodes) else PathEvent.ADVANCED
    alpha = math.degrees(math.atan2(yi - py, xi - px)) % 360.0
    return FieldCommand(
        mode=FieldMode.ROTATING_ROLL,
        alpha=alpha,
        gamma=gamma,
        freq=freq,
        amplitude=amplitude,
    )


@dataclass
class FreqSearchState:
    """Mutable state of the velocity-feedback frequency sweep."""

    f_min: float
    f_max: float
    v_min: float
    v_max: float
    f_current: float = None  # type: ignore[assignment]
    increment: float = FREQ_INCREMENT_INIT_HZ
    f_optimal: Optional[float] = None
    n: int = 0
    increment_at_success: Optional[float] = None  # sweep resolution when f_optimal was set

    def __post_init__(self):
        if self.f_current is None:
            self.f_current = self.f_min
        if self.f_min > self.f_max:
            raise ValueError("f_min must not exceed f_max")
        if not self.f_min <= self.f_current <= self.f_max:
            raise ValueError("f_current must start inside [f_min, f_max]")
        if self.increment <= 0:
            raise ValueError("increment must be positive")


def freq_search_step(s: FreqSearchState, v_mag: float) -> float:
    """One step of the adaptive frequency search; returns the frequency to apply.

    Transcribed branch for branch from the automated control listing:
    too slow -> sweep upward every 10th call, wrapping to f_min with a halved
    step at the top; inside the velocity band -> record f_optimal and refine
    the step tenfold; too fast -> back off every 20th call.  Exact equality
    with either band edge falls through all branches (only n advances), and
    the step never refines below FREQ_INCREMENT_FLOOR_HZ.
    """
    if v_mag < s.v_min:
        if s.f_current < s.f_max:
            if s.n % 10 == 0:
                s.f_current = s.f_current + s.increment
        else:
            s.increment = max(s.increment / 2.0, FREQ_INCREMENT_FLOOR_HZ)
            s.f_current = s.f_min
    elif s.v_min < v_mag < s.v_max:
        if s.f_optimal != s.f_current:
            s.increment_at_success = s.increment  # resolution of the locating sweep
        s.f_optimal = s.f_current
        s.increment = max(s.increment / 10.0, FREQ_INCREMENT_FLOOR_HZ)
    elif v_mag > s.v_max:
        if s.n % 20 == 0 and s.f_current > s.f_min:
            s.f_current = s.f_current - FREQ_BACKOFF_HZ
    s.n += 1
    return s.f_current


@dataclass
class OrientationState:
    """2x2 rotation relating the applied field direction to the direction the
    robot actually moves, learned online, plus the navigation target."""

    target: Tuple[float, float]
    R: np.ndarray = field(default_factory=lambda: np.eye(2))
    last_field_dir: Optional[Tuple[float, float]] = None


def _rotation_between(u: Tuple[float, float], v: Tuple[float, float]) -> np.ndarray:
    theta = math.atan2(v[1], v[0]) - math.atan2(u[1], u[0])
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def orientation_step(
    o: OrientationState,
    p: Tuple[float, float],
    motion_dir: Optional[Tuple[float, float]],
    amplitude: float = 1.0,
    z_bias: float = 0.0,
) -> FieldCommand:
    """Steer toward the target through the learned rotation.

    When fresh motion is observed, R is refit so R (applied field dir) equals
    the motion direction; while the robot dwells, R stays frozen and the field
    keeps pointing where the stale R says.  The emitted uniform field is
    R^-1 (target - p) normalized.
    """
    if motion_dir is not None and o.last_field_dir is not None:
        o.R = _rotation_between(o.last_field_dir, motion_dir)
    tx, ty = o.target[0] - p[0], o.target[1] - p[1]
    norm = math.hypot(tx, ty)
    if norm < 1e-12:
        desired = np.array([1.0, 0.0])  # at the target; direction is arbitrary
    else:
        desired = np.array([tx / norm, ty / norm])
    fdir = o.R.T @ desired  # inverse of a rotation is its transpose
    o.last_field_dir = (float(fdir[0]), float(fdir[1]))
    alpha = math.degrees(math.atan2(fdir[1], fdir[0])) % 360.0
    return FieldCommand(
        mode=FieldMode.UNIFORM,
        alpha=alpha,
        gamma=90.0,
        amplitude=amplitude,
        z_bias=z_bias,
    )


@dataclass(frozen=True)
class JoystickInput:
    right_stick: Tuple[float, float] = (0.0, 0.0)
    left_stick: Tuple[float, float] = (0.0, 0.0)
    l_trigger: float = 0.0
    r_trigger: float = 0.0
    square: bool = False
    circle: bool = False


def joystick_map(inp: JoystickInput, prev: Optional[FieldCommand] = None) -> FieldCommand:
    """Map controller state onto a field command.

    Right stick angle sets the rolling heading alpha; left stick sets a
    uniform orienting field; triggers push the z duty bias in opposite
    directions; square/circle snap gamma to 180/90 for clockwise or
    counterclockwise spin.  Sticks inside the 0.1 dead zone leave the
    previous command's mode and angles untouched.
    """
    cmd = prev if prev is not None else FieldCommand.off()
    mode, alpha, gamma, freq = cmd.mode, cmd.alpha, cmd.gamma, cmd.freq
    amplitude = cmd.amplitude

    rx, ry = inp.right_stick
    lx, ly = inp.left_stick
    if math.hypot(rx, ry) >= JOYSTICK_DEADZONE:
        mode = FieldMode.ROTATING_ROLL
        alpha = math.degrees(math.atan2(ry, rx)) % 360.0
        if freq <= 0:
            freq = DEFAULT_PATH_FREQ_HZ
        amplitude = 1.0
    elif math.hypot(lx, ly) >= JOYSTICK_DEADZONE:
        mode = FieldMode.UNIFORM
        alpha = math.degrees(math.atan2(ly, lx)) % 360.0
        amplitude = 1.0

    z_bias = max(-1.0, min(1.0, inp.r_trigger - inp.l_trigger))
    if inp.square:
        gamma = 180.0
    elif inp.circle:
        gamma = 90.0
    return FieldCommand(
        mode=mode,
        alpha=alpha,
        gamma=gamma,
        freq=freq,
        amplitude=amplitude,
        gradient_axis=cmd.gradient_axis,
        z_bias=z_bias,
    )
