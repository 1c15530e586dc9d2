"""Calibrated map from signed PWM duties to flux density at the workspace center.

The model is a per-axis anchor table interpolated bilinearly over
(supply voltage, |duty|) and signed by the duty's polarity.  Below an
axis's H-bridge activation voltage no current is drawn and the output
is zero.  Spatial variation is out of scope: only the center value and
a scalar gradient coefficient are represented.
"""

from dataclasses import dataclass
from importlib import resources
from typing import Dict, Iterable, List, Tuple

import numpy as np

from .field_synth import PwmFrame

AXES = ("x", "y", "z")
VOLTAGE_RANGE = (0.0, 27.0)

# The platform reports no measured field gradient; the pull model uses this
# configurable coefficient for gradient-mode scenarios.
DEFAULT_GRADIENT_MT_PER_MM = 0.5


class CalibrationRangeError(ValueError):
    """Query outside the calibrated voltage range."""


class CalibrationFormatError(ValueError):
    """Calibration file failed schema validation."""


@dataclass
class _AxisTable:
    voltages: np.ndarray                 # sorted, starting at the activation voltage
    duty_knots: List[np.ndarray]         # per voltage row, sorted duty anchors
    flux_knots: List[np.ndarray]         # matching flux values, mT
    activation_voltage: float

    def flux(self, voltage: float, duty: float) -> float:
        mag = abs(duty)
        if voltage < self.activation_voltage:
            return 0.0
        i = int(np.searchsorted(self.voltages, voltage))
        if i < len(self.voltages) and self.voltages[i] == voltage:
            f = float(np.interp(mag, self.duty_knots[i], self.flux_knots[i]))
        else:
            lo, hi = i - 1, i
            f0 = float(np.interp(mag, self.duty_knots[lo], self.flux_knots[lo]))
            f1 = float(np.interp(mag, self.duty_knots[hi], self.flux_knots[hi]))
            v0, v1 = self.voltages[lo], self.voltages[hi]
            f = f0 + (f1 - f0) * (voltage - v0) / (v1 - v0)
        return f if duty >= 0 else -f


@dataclass
class CoilCalibration:
    tables: Dict[str, _AxisTable]
    source: str = "builtin"

    @property
    def activation_voltages(self) -> Dict[str, float]:
        return {a: t.activation_voltage for a, t in self.tables.items()}

    def anchors(self) -> Iterable[Tuple[str, float, float, float]]:
        """Yield every (axis, voltage, duty, flux) anchor in the table."""
        for axis, t in self.tables.items():
            for v, duties, fluxes in zip(t.voltages, t.duty_knots, t.flux_knots):
                for d, f in zip(duties, fluxes):
                    yield axis, float(v), float(d), float(f)


@dataclass(frozen=True)
class HallReading:
    axis: str
    flux: float
    noise_sigma: float


def load_calibration(path=None) -> CoilCalibration:
    """Load and schema-validate an anchor table (default: the shipped one)."""
    if path is None:
        text = (
            resources.files("microtwin").joinpath("data/coil_calibration.txt").read_text()
        )
        source = "builtin"
    else:
        with open(path) as f:
            text = f.read()
        source = str(path)
    activation: Dict[str, float] = {}
    rows: Dict[str, Dict[float, List[Tuple[float, float]]]] = {a: {} for a in AXES}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if parts[0] == "activation":
            if len(parts) != 3 or parts[1] not in AXES:
                raise CalibrationFormatError(f"line {lineno}: bad activation row")
            activation[parts[1]] = float(parts[2])
            continue
        if len(parts) != 4:
            raise CalibrationFormatError(f"line {lineno}: expected 4 fields")
        axis = parts[0]
        if axis not in AXES:
            raise CalibrationFormatError(f"line {lineno}: unknown axis {axis!r}")
        try:
            voltage, duty, flux = (float(p) for p in parts[1:])
        except ValueError:
            raise CalibrationFormatError(f"line {lineno}: non-numeric field") from None
        if not 0.0 <= duty <= 1.0:
            raise CalibrationFormatError(f"line {lineno}: duty outside [0, 1]")
        if flux < 0:
            raise CalibrationFormatError(f"line {lineno}: negative flux")
        rows[axis].setdefault(voltage, []).append((duty, flux))

    tables = {}
    for axis in AXES:
        if axis not in activation:
            raise CalibrationFormatError(f"missing activation voltage for {axis}")
        if not rows[axis]:
            raise CalibrationFormatError(f"no anchors for axis {axis}")
        voltages = sorted(rows[axis])
        duty_knots, flux_knots = [], []
        for v in voltages:
            pts = sorted(rows[axis][v])
            duties = np.array([p[0] for p in pts])
            fluxes = np.array([p[1] for p in pts])
            if duties[0] != 0.0 or fluxes[0] != 0.0:
                raise CalibrationFormatError(
                    f"{axis}@{v}V: rows must anchor flux(v, 0) = 0"
                )
            if np.any(np.diff(duties) <= 0):
                raise CalibrationFormatError(f"{axis}@{v}V: duplicate duty anchors")
            if np.any(np.diff(fluxes) < 0):
                raise CalibrationFormatError(
                    f"{axis}@{v}V: flux must be nondecreasing in duty"
                )
            duty_knots.append(duties)
            flux_knots.append(fluxes)
        tables[axis] = _AxisTable(
            np.array(voltages, dtype=float), duty_knots, flux_knots, activation[axis]
        )
    return CoilCalibration(tables, source)


def _check_voltage(voltage: float) -> None:
    lo, hi = VOLTAGE_RANGE
    if not lo <= voltage <= hi:
        raise CalibrationRangeError(
            f"supply voltage {voltage} V outside calibrated range [{lo}, {hi}]"
        )


def field_from_duty(
    calib: CoilCalibration, voltage: float, frame: PwmFrame
) -> np.ndarray:
    """Flux density vector (mT) at the workspace center for one PWM frame."""
    _check_voltage(voltage)
    duties = frame.as_tuple()
    return np.array(
        [calib.tables[a].flux(voltage, d) for a, d in zip(AXES, duties)]
    )


def max_field(calib: CoilCalibration, voltage: float) -> np.ndarray:
    """Per-axis flux at full duty, mT."""
    return field_from_duty(calib, voltage, PwmFrame(1.0, 1.0, 1.0, t=0.0))


def hall_emulate(
    true_field: np.ndarray, noise_sigma: float, rng_seed: int
) -> Tuple[HallReading, HallReading, HallReading]:
    """Per-axis hall sensor readback: Gaussian perturbation, deterministic per seed."""
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be nonnegative")
    rng = np.random.default_rng(rng_seed)
    noisy = np.asarray(true_field, dtype=float) + rng.normal(0.0, noise_sigma, 3)
    return tuple(
        HallReading(axis, float(v), noise_sigma) for axis, v in zip(AXES, noisy)
    )
