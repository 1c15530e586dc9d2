"""Microrobot motion models.

Kinematic (velocity-level) robots: at this scale motion is overdamped, so
speed maps directly from the actuation state instead of integrating forces.
Torque and gradient force are exposed as primitives; they feed orientation
alignment and the optional gradient-pull mode, not the position update.

Units: positions in micrometers, speeds in um/s, time in seconds, angles
in radians unless a field is explicitly degrees.
"""

import math
from dataclasses import dataclass, field as dc_field
from enum import Enum
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .field_synth import FieldCommand, FieldMode

TWO_PI = 2.0 * math.pi


class RobotKind(Enum):
    ROLLER = "roller"
    ACOUSTIC_CUP = "acoustic_cup"
    PASSIVE = "passive"


@dataclass
class RollingParams:
    """Speed-vs-rotation-frequency law for a rolling magnetized sphere."""

    radius_um: float
    k_roll: float          # um/s per Hz below step-out
    f_stepout: float       # Hz; rises with supply voltage
    decay_exponent: float = 1.0

    def __post_init__(self):
        if self.k_roll <= 0 or self.f_stepout <= 0:
            raise ValueError("k_roll and f_stepout must be positive")


# Presets fitted to the measured 20 um Ni-coated sphere curves.
ROLLING_12V = RollingParams(radius_um=10.0, k_roll=160.0 / 40.0, f_stepout=40.0)
ROLLING_24V = RollingParams(radius_um=10.0, k_roll=270.0 / 70.0, f_stepout=70.0)


def rolling_params_for_voltage(voltage: float, radius_um: float = 10.0) -> RollingParams:
    """Interpolate the 12 V / 24 V presets in voltage, clamped at the ends."""
    v = min(max(voltage, 12.0), 24.0)
    t = (v - 12.0) / 12.0
    return RollingParams(
        radius_um=radius_um,
        k_roll=ROLLING_12V.k_roll + t * (ROLLING_24V.k_roll - ROLLING_12V.k_roll),
        f_stepout=ROLLING_12V.f_stepout
        + t * (ROLLING_24V.f_stepout - ROLLING_12V.f_stepout),
    )


@dataclass
class BubbleGeometry:
    """Trapped-bubble geometry of a cup robot. SI units."""

    kappa: float = 1.4        # adiabatic index of the gas
    rho: float = 1000.0       # kg/m^3, water
    P0: float = 101325.0      # Pa, static bubble pressure
    L: float = 10e-6          # m, cavity length
    Lb: float = 5e-6          # m, bubble length
    a: float = 2.5e-6         # m, inner cavity radius
    gamma_surf: float = 0.07  # N/m, water-air surface tension

    def __post_init__(self):
        for name in ("kappa", "rho", "P0", "L", "Lb", "a"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.gamma_surf < 0:
            raise ValueError("gamma_surf must be nonnegative")
        if self.Lb >= self.L:
            raise ValueError("bubble length must be shorter than the cavity")


@dataclass(frozen=True)
class AcousticPeak:
    center_hz: float
    width_hz: float      # Lorentzian half width at half maximum
    peak_speed: float    # um/s at the center

    def __post_init__(self):
        if self.width_hz <= 0:
            raise ValueError("peak width must be positive")
        if self.peak_speed < 0:
            raise ValueError("peak speed must be nonnegative")


@dataclass
class AcousticResponse:
    """Phenomenological speed-vs-drive-frequency curve: a sum of Lorentzian
    peaks over a baseline.  The peak list is configuration, not physics; the
    frequency-dependent dynamics of cup robots are not fully characterized."""

    peaks: List[AcousticPeak]
    baseline: float = 0.0


# Measured 3 um cup robot response: velocity peaks near 1.2, 1.8 and 2 MHz.
DEFAULT_ACOUSTIC_RESPONSE = AcousticResponse(
    peaks=[
        AcousticPeak(1.2e6, 50e3, 60.0),
        AcousticPeak(1.8e6, 50e3, 45.0),
        AcousticPeak(2.0e6, 50e3, 50.0),
    ]
)


@dataclass(frozen=True)
class MagneticMoment:
    m: Tuple[float, float, float]  # A m^2


def magnetic_torque(m: Sequence[float], B: Sequence[float]) -> np.ndarray:
    """Torque on a dipole: m x B (N m for m in A m^2 and B in T)."""
    return np.cross(np.asarray(m, dtype=float), np.asarray(B, dtype=float))


def magnetic_force(m: Sequence[float], gradB: np.ndarray) -> np.ndarray:
    """Gradient pull on a dipole: F_i = sum_j m_j dB_i/dx_j.

    gradB[i, j] holds dB_i/dx_j in T/m.
    """
    g = np.asarray(gradB, dtype=float)
    if g.shape != (3, 3):
        raise ValueError("gradB must be a 3x3 tensor")
    return g @ np.asarray(m, dtype=float)


def resonant_frequency(g: BubbleGeometry) -> float:
    """Resonance of the trapped bubble, Hz.

    f0 = (1/2pi) sqrt(kappa P0 / (rho (L - Lb) Lb)) * M with the
    surface-tension correction M = sqrt(1 + 4 gamma Lb / (kappa P0 a^2)).
    """
    M = math.sqrt(1.0 + 4.0 * g.gamma_surf * g.Lb / (g.kappa * g.P0 * g.a * g.a))
    bare = math.sqrt(g.kappa * g.P0 / (g.rho * (g.L - g.Lb) * g.Lb)) / TWO_PI
    return bare * M


def rolling_speed(f: float, p: RollingParams) -> float:
    """Translational speed of a roller at rotation frequency f.

    Linear in f up to step-out; beyond it the sphere slips out of sync and
    speed decays as a power law instead of rising.
    """
    if f < 0:
        raise ValueError("frequency must be nonnegative")
    if f <= p.f_stepout:
        return p.k_roll * f
    return p.k_roll * p.f_stepout * (p.f_stepout / f) ** p.decay_exponent


def acoustic_speed(f_applied: float, r: AcousticResponse) -> float:
    """Cup-robot speed at the applied transducer frequency, um/s."""
    if f_applied < 0:
        raise ValueError("frequency must be nonnegative")
    if f_applied == 0.0:
        return r.baseline  # no drive, no streaming
    total = r.baseline
    for pk in r.peaks:
        x = (f_applied - pk.center_hz) / pk.width_hz
        total += pk.peak_speed / (1.0 + x * x)
    return total


@dataclass
class RobotState:
    """One simulated agent. position/heading/speed live in the workspace
    frame (um, radians); params beyond the tracked state configure the
    motion model for its kind."""

    kind: RobotKind
    x: float
    y: float
    z: float = 0.0
    heading: float = 0.0
    speed: float = 0.0
    radius_um: float = 10.0
    rolling: Optional[RollingParams] = None
    acoustic: Optional[AcousticResponse] = None
    misalign: float = 0.0  # rad between applied field direction and motion

    def __post_init__(self):
        self.heading = self.heading % TWO_PI

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])


@dataclass
class World:
    """Simulation state owned by a single task; telemetry readers only ever
    see snapshots."""

    robots: List[RobotState]
    seed: int = 0
    jitter_sigma_um: float = 0.0     # Brownian position noise per sqrt(s), off by default
    heading_noise_rad: float = 0.0   # optional acoustic orientation wander, off by default
    rng: np.random.Generator = dc_field(init=False)

    def __post_init__(self):
        self.rng = np.random.default_rng(self.seed)


def _in_plane_field_direction(cmd: FieldCommand) -> Optional[float]:
    if math.sin(math.radians(cmd.gamma)) <= 1e-12:
        return None  # field points along z, no in-plane heading
    return math.radians(cmd.alpha)


def step(
    world: World,
    cmd: FieldCommand,
    acoustic_f: float,
    dt: float,
) -> World:
    """Advance every robot by one explicit-Euler step of length dt.

    Rollers head along the commanded rotation-axis direction (alpha) and move
    at rolling_speed; cup robots align to an applied uniform field (offset by
    their misalignment) and move at acoustic_speed; passive spheres move only
    when pushed.  Mutates and returns the world.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    for r in world.robots:
        if r.kind is RobotKind.ROLLER:
            if cmd.mode in (FieldMode.ROTATING_ROLL, FieldMode.ROTATING_SWIM):
                params = r.rolling if r.rolling is not None else ROLLING_12V
                r.heading = math.radians(cmd.alpha) % TWO_PI
                r.speed = rolling_speed(cmd.freq, params) * (
                    1.0 if cmd.amplitude > 0 else 0.0
                )
            else:
                r.speed = 0.0
        elif r.kind is RobotKind.ACOUSTIC_CUP:
            if cmd.mode is FieldMode.UNIFORM and cmd.amplitude > 0:
                fdir = _in_plane_field_direction(cmd)
                if fdir is not None:
                    r.heading = (fdir + r.misalign) % TWO_PI
            response = r.acoustic if r.acoustic is not None else DEFAULT_ACOUSTIC_RESPONSE
            r.speed = acoustic_speed(acoustic_f, response)
            if world.heading_noise_rad > 0 and r.speed > 0:
                r.heading = (
                    r.heading + world.rng.normal(0.0, world.heading_noise_rad)
                ) % TWO_PI
        else:
            r.speed = 0.0
        r.x += r.speed * math.cos(r.heading) * dt
        r.y += r.speed * math.sin(r.heading) * dt

    if world.jitter_sigma_um > 0:
        sigma = world.jitter_sigma_um * math.sqrt(dt)
        for r in world.robots:
            r.x += world.rng.normal(0.0, sigma)
            r.y += world.rng.normal(0.0, sigma)

    movers = [r for r in world.robots if r.kind is not RobotKind.PASSIVE]
    passives = [r for r in world.robots if r.kind is RobotKind.PASSIVE]
    for mover in movers:
        for sphere in passives:
            push_contact(mover, sphere)
    return world


def push_contact(robot: RobotState, sphere: RobotState) -> Tuple[RobotState, RobotState]:
    """Resolve rigid contact in the plane: if the centers are closer than the
    radius sum, the passive sphere is displaced outward along the line of
    centers until the surfaces just touch."""
    dx = sphere.x - robot.x
    dy = sphere.y - robot.y
    dist = math.hypot(dx, dy)
    min_dist = robot.radius_um + sphere.radius_um
    if dist >= min_dist:
        return robot, sphere
    if dist < 1e-12:
        # concentric degenerate case: push along the robot heading
        ux, uy = math.cos(robot.heading), math.sin(robot.heading)
    else:
        ux, uy = dx / dist, dy / dist
    sphere.x = robot.x + ux * min_dist
    sphere.y = robot.y + uy * min_dist
    return robot, sphere
