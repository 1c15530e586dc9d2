"""Desk-scale software twin of a coil-array microrobot platform.

Subsystems: field_synth (firmware loop and waveforms), coil_model
(duty -> flux calibration), dynamics (robot motion), vision (synthetic
frames and centroid tracking), control (closed-loop controllers),
harness (scenario runner, telemetry, serial codec) and server (the
websocket UI bridge).
"""

from .field_synth import (
    FieldCommand,
    FieldMode,
    FirmwareEmulator,
    GradientAxis,
    LoopClock,
    PwmFrame,
)

__all__ = [
    "FieldCommand",
    "FieldMode",
    "FirmwareEmulator",
    "GradientAxis",
    "LoopClock",
    "PwmFrame",
]

__version__ = "0.1.0"
