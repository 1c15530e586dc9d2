"""Firmware-side synthesis of coil drive signals.

Emulates the microcontroller loop that turns a field command into signed
PWM duty cycles for the three coil axes, one sample per 500 Hz tick.  The
31 kHz PWM carrier itself is below the modeling horizon (coil inductance
low-passes it); it is kept only as reported metadata.
"""

import math
from collections import deque
from dataclasses import dataclass, replace
from enum import Enum
from typing import Optional, Tuple

DEFAULT_LOOP_RATE_HZ = 500.0
PWM_CARRIER_HZ = 31_000.0
MAX_ROTATION_FREQ_HZ = 250.0  # usable Nyquist bound of the 500 Hz loop

SERIAL_DECIMALS = 4  # declared precision of the line protocol


class FieldMode(Enum):
    ROTATING_ROLL = "RotatingRoll"
    ROTATING_SWIM = "RotatingSwim"
    UNIFORM = "Uniform"
    GRADIENT = "Gradient"
    OFF = "Off"


class GradientAxis(Enum):
    POS_X = "+X"
    NEG_X = "-X"
    POS_Y = "+Y"
    NEG_Y = "-Y"
    POS_Z = "+Z"
    NEG_Z = "-Z"


class CommandError(ValueError):
    """A field command failed validation and was rejected whole."""


class SerialParseError(ValueError):
    """Malformed command line; `offset` is the character position of the bad field."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (offset {offset})")
        self.offset = offset


@dataclass(frozen=True)
class FieldCommand:
    """Actuation intent sent host -> firmware.

    alpha: azimuthal angle, degrees in [0, 360)
    gamma: polar angle, degrees in [0, 180]
    freq:  rotation frequency, Hz in [0, 250)
    amplitude: duty scale in [0, 1]
    z_bias: extra z duty in [-1, 1], added after amplitude scaling
    """

    mode: FieldMode
    alpha: float = 0.0
    gamma: float = 90.0
    freq: float = 0.0
    amplitude: float = 1.0
    gradient_axis: Optional[GradientAxis] = None
    z_bias: float = 0.0

    def validate(self) -> "FieldCommand":
        if not 0.0 <= self.alpha < 360.0:
            raise CommandError(f"alpha out of range [0, 360): {self.alpha}")
        if not 0.0 <= self.gamma <= 180.0:
            raise CommandError(f"gamma out of range [0, 180]: {self.gamma}")
        # The loop rate allows just over 2 samples per period at 250 Hz, so the
        # cap is exclusive: [0, 250).
        if not 0.0 <= self.freq < MAX_ROTATION_FREQ_HZ:
            raise CommandError(f"freq out of range [0, 250): {self.freq}")
        if not 0.0 <= self.amplitude <= 1.0:
            raise CommandError(f"amplitude out of range [0, 1]: {self.amplitude}")
        if not -1.0 <= self.z_bias <= 1.0:
            raise CommandError(f"z_bias out of range [-1, 1]: {self.z_bias}")
        if self.mode is FieldMode.GRADIENT and self.gradient_axis is None:
            raise CommandError("gradient mode requires a gradient_axis")
        return self

    @staticmethod
    def off() -> "FieldCommand":
        return FieldCommand(mode=FieldMode.OFF, amplitude=0.0)


@dataclass(frozen=True)
class PwmFrame:
    """One loop tick of signed duties in [-1, 1]; sign encodes H-bridge polarity."""

    duty_x: float
    duty_y: float
    duty_z: float
    t: float
    single_coil: bool = False  # gradient mode drives one coil, not the pair

    def as_tuple(self) -> Tuple[float, float, float]:
        return (self.duty_x, self.duty_y, self.duty_z)


class LoopClock:
    """Virtual firmware clock; t is derived from an integer tick count so
    step_count / loop_rate == t holds exactly."""

    def __init__(self, loop_rate: float = DEFAULT_LOOP_RATE_HZ):
        if loop_rate <= 0:
            raise ValueError("loop_rate must be positive")
        self.loop_rate = loop_rate
        self.steps = 0

    @property
    def t(self) -> float:
        return self.steps / self.loop_rate

    def tick(self) -> float:
        self.steps += 1
        return self.t


def sample_rotating_field(
    cmd: FieldCommand, t: float, variant: str = "equation"
) -> Tuple[float, float, float]:
    """Unit rotating-field waveform (bx, by, bz) at time t.

    variant "equation" is the published closed form; "loop" flips the sign
    of the cos(gamma) term in bx and of the cos(alpha) term in by, matching
    the control-loop pseudocode listing.  Both trace a unit vector.
    """
    if cmd.mode not in (FieldMode.ROTATING_ROLL, FieldMode.ROTATING_SWIM):
        raise CommandError(f"not a rotating mode: {cmd.mode}")
    cmd.validate()
    a = math.radians(cmd.alpha)
    g = math.radians(cmd.gamma)
    w = 2.0 * math.pi * cmd.freq * t
    cw, sw = math.cos(w), math.sin(w)
    if variant == "equation":
        bx = -math.cos(g) * math.cos(a) * cw + math.sin(a) * sw
        by = -math.cos(g) * math.sin(a) * cw - math.cos(a) * sw
    elif variant == "loop":
        bx = math.cos(g) * math.cos(a) * cw + math.sin(a) * sw
        by = -math.cos(g) * math.sin(a) * cw + math.cos(a) * sw
    else:
        raise ValueError(f"unknown waveform variant: {variant}")
    bz = math.sin(g) * cw
    return (bx, by, bz)


def sample_static_field(cmd: FieldCommand) -> Tuple[float, float, float]:
    """Non-rotating sample: uniform spherical direction, single-coil gradient, or off."""
    if cmd.mode is FieldMode.OFF:
        return (0.0, 0.0, 0.0)
    cmd.validate()
    if cmd.mode is FieldMode.UNIFORM:
        a = math.radians(cmd.alpha)
        g = math.radians(cmd.gamma)
        return (
            math.sin(g) * math.cos(a) * cmd.amplitude,
            math.sin(g) * math.sin(a) * cmd.amplitude,
            math.cos(g) * cmd.amplitude,
        )
    if cmd.mode is FieldMode.GRADIENT:
        axis = cmd.gradient_axis
        sign = 1.0 if axis.value[0] == "+" else -1.0
        d = sign * cmd.amplitude
        if axis in (GradientAxis.POS_X, GradientAxis.NEG_X):
            return (d, 0.0, 0.0)
        if axis in (GradientAxis.POS_Y, GradientAxis.NEG_Y):
            return (0.0, d, 0.0)
        return (0.0, 0.0, d)
    raise CommandError(f"not a static mode: {cmd.mode}")


def _clamp(v: float) -> float:
    return max(-1.0, min(1.0, v))


def firmware_step(
    clock: LoopClock, cmd: FieldCommand, variant: str = "equation"
) -> PwmFrame:
    """Advance the loop one tick and sample the active mode at the new t.

    Amplitude scales the unit waveform; z_bias is added to duty_z afterwards
    and the result saturates at +/-1.  Off produces a zero frame.
    """
    t = clock.tick()
    if cmd.mode is FieldMode.OFF:
        return PwmFrame(0.0, 0.0, 0.0, t)
    if cmd.mode in (FieldMode.ROTATING_ROLL, FieldMode.ROTATING_SWIM):
        bx, by, bz = sample_rotating_field(cmd, t, variant=variant)
        bx *= cmd.amplitude
        by *= cmd.amplitude
        bz *= cmd.amplitude
        single = False
    else:
        bx, by, bz = sample_static_field(cmd)
        single = cmd.mode is FieldMode.GRADIENT
    bz = bz + cmd.z_bias
    return PwmFrame(_clamp(bx), _clamp(by), _clamp(bz), t, single_coil=single)


def samples_per_period(loop_rate: float, f: float) -> float:
    """Loop samples that make up one sinusoid period (loop_rate / f)."""
    if f <= 0:
        raise ValueError(f"frequency must be positive: {f}")
    return loop_rate / f


def is_aliased(loop_rate: float, f: float) -> bool:
    """True when 2 or fewer samples per period remain and the field vector
    sequence stops rotating forward."""
    return samples_per_period(loop_rate, f) <= 2.0


class FirmwareEmulator:
    """The firmware loop plus its inbound command channel.

    Commands are queued in order (mirroring the serial link) and the loop
    consumes at most one pending command per tick.  Validation happens at
    post time, so a rejected command never partially applies.
    """

    def __init__(
        self, loop_rate: float = DEFAULT_LOOP_RATE_HZ, variant: str = "equation"
    ):
        self.clock = LoopClock(loop_rate)
        self.variant = variant
        self.active = FieldCommand.off()
        self._inbox: deque = deque()

    def post(self, cmd: FieldCommand) -> None:
        self._inbox.append(cmd.validate())

    def step(self) -> PwmFrame:
        if self._inbox:
            self.active = self._inbox.popleft()
        return firmware_step(self.clock, self.active, variant=self.variant)


# --- line protocol ----------------------------------------------------------
#
# One command per line:
#   CMD <mode> <alpha> <gamma> <freq> <amplitude> <gradient_axis> <z_bias>\n
# Decimal fields carry 4 decimal places; gradient_axis is +X/-X/... or "-"
# when unused.  encode/decode round-trip exactly at that precision.

_NO_AXIS = "-"


def quantize_command(cmd: FieldCommand) -> FieldCommand:
    """Round the decimal fields to the protocol's 4-decimal precision."""
    q = lambda v: round(v, SERIAL_DECIMALS)
    return replace(
        cmd,
        alpha=q(cmd.alpha),
        gamma=q(cmd.gamma),
        freq=q(cmd.freq),
        amplitude=q(cmd.amplitude),
        z_bias=q(cmd.z_bias),
    )


def encode_command(cmd: FieldCommand) -> str:
    cmd.validate()
    axis = cmd.gradient_axis.value if cmd.gradient_axis is not None else _NO_AXIS
    return (
        f"CMD {cmd.mode.value} {cmd.alpha:.4f} {cmd.gamma:.4f} {cmd.freq:.4f} "
        f"{cmd.amplitude:.4f} {axis} {cmd.z_bias:.4f}\n"
    )


def decode_command(line: str) -> FieldCommand:
    raw = line.rstrip("\n")
    fields = raw.split(" ")
    offsets = []
    pos = 0
    for f in fields:
        offsets.append(pos)
        pos += len(f) + 1
    if len(fields) != 8:
        raise SerialParseError(f"expected 8 fields, got {len(fields)}", 0)
    if fields[0] != "CMD":
        raise SerialParseError(f"bad tag {fields[0]!r}", offsets[0])
    try:
        mode = FieldMode(fields[1])
    except ValueError:
        raise SerialParseError(f"unknown mode {fields[1]!r}", offsets[1]) from None

    def num(i: int, name: str) -> float:
        try:
            return float(fields[i])
        except ValueError:
            raise SerialParseError(f"bad {name} {fields[i]!r}", offsets[i]) from None

    alpha = num(2, "alpha")
    gamma = num(3, "gamma")
    freq = num(4, "freq")
    amplitude = num(5, "amplitude")
    if fields[6] == _NO_AXIS:
        axis = None
    else:
        try:
            axis = GradientAxis(fields[6])
        except ValueError:
            raise SerialParseError(
                f"unknown gradient axis {fields[6]!r}", offsets[6]
            ) from None
    z_bias = num(7, "z_bias")
    cmd = FieldCommand(mode, alpha, gamma, freq, amplitude, axis, z_bias)
    try:
        return cmd.validate()
    except CommandError as e:
        raise SerialParseError(str(e), offsets[2]) from None
