"""Quality-speed profiles: how fast can the base move while printing.

A profile is a straight line q(v) = a*v + b mapping base speed (m/s) to
the worst-case dimensional error (mm) of the printed part, fitted per
task class from calibration runs. Inverting it for a quality tolerance
gives the maximum admissible base speed for that task.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass

from .errors import (
    MapFormatError,
    NonInvertibleModelError,
    SingularFitError,
    ToleranceUnachievableError,
)

#: Fastest base speed the platform is ever driven at (m/s).
V_HARDWARE_MAX = 1.0

#: Default quality tolerance for contour work (mm). Infill and support
#: tolerances are deliberately not defaulted; scenarios must supply them.
CONTOUR_TOL_MM = 0.05


class TaskClass(enum.IntEnum):
    """Print task kinds, ordered by decreasing quality demand."""

    CONTOUR = 0
    INFILL = 1
    SUPPORT = 2

    @classmethod
    def parse(cls, name: str) -> "TaskClass":
        try:
            return cls[name.strip().upper()]
        except KeyError:
            raise ValueError(f"unknown task class {name!r}") from None


@dataclass(frozen=True)
class CalibrationSample:
    """One printed part: base speed and signed errors per axis (mm)."""

    speed: float
    height_err: float
    width_err: float
    depth_err: float

    def __post_init__(self):
        if self.speed < 0:
            raise ValueError("speed must be nonnegative")
        for e in (self.height_err, self.width_err, self.depth_err):
            if not math.isfinite(e) or abs(e) >= 10.0:
                raise ValueError("error out of sane range (|e| < 10 mm)")


@dataclass(frozen=True)
class QspModel:
    """q(v) = a*v + b for one task class."""

    a: float  # mm per (m/s)
    b: float  # mm
    task: TaskClass
    error_metric: str = "max_abs_axis_error"

    def __post_init__(self):
        if not math.isfinite(self.a) or not math.isfinite(self.b):
            raise ValueError("model coefficients must be finite")


def scalarize(sample: CalibrationSample) -> float:
    """Largest absolute deviation across the three axes, in mm."""
    return max(
        abs(sample.height_err), abs(sample.width_err), abs(sample.depth_err)
    )


def fit_qsp(samples, task: TaskClass) -> QspModel:
    """Ordinary least squares on (speed, scalarized error) pairs.

    Replicate rows at the same speed are scalarized first and then
    averaged, so every speed contributes one equally weighted point.
    Samples are sorted before grouping, which makes the fit invariant
    to input ordering.
    """
    samples = sorted(
        samples,
        key=lambda s: (s.speed, s.height_err, s.width_err, s.depth_err),
    )
    if not samples:
        raise SingularFitError("no calibration samples")
    groups: dict[float, list[float]] = {}
    for s in samples:
        groups.setdefault(s.speed, []).append(scalarize(s))
    if len(groups) < 2:
        raise SingularFitError("need at least two distinct speeds to fit")
    xs = sorted(groups)
    ys = [sum(groups[v]) / len(groups[v]) for v in xs]
    n = len(xs)
    xbar = sum(xs) / n
    ybar = sum(ys) / n
    sxx = sum((x - xbar) ** 2 for x in xs)
    sxy = sum((x - xbar) * (y - ybar) for x, y in zip(xs, ys))
    a = sxy / sxx
    b = ybar - a * xbar
    return QspModel(a=a, b=b, task=task)


def predict_quality(model: QspModel, v: float) -> float:
    """Predicted dimensional error (mm) at base speed v (m/s)."""
    if v < 0:
        raise ValueError("speed must be nonnegative")
    return model.a * v + model.b


def max_speed_for_tolerance(
    model: QspModel, q_tol: float, v_hardware_max: float = V_HARDWARE_MAX
) -> float:
    """Largest speed whose predicted error stays within q_tol (mm).

    Clamped to [0, v_hardware_max]. Requires a rising profile (a > 0)
    and q_tol >= b; a tolerance below the intercept is unachievable at
    any speed, including standing still.
    """
    if model.a <= 0:
        raise NonInvertibleModelError(
            f"slope a={model.a:g} is not positive; cannot invert"
        )
    if q_tol < model.b:
        raise ToleranceUnachievableError(
            f"tolerance {q_tol:g} mm is below the intercept {model.b:g} mm"
        )
    v = (q_tol - model.b) / model.a
    return min(max(v, 0.0), v_hardware_max)


# ---------------------------------------------------------------------------
# Calibration CSV

CSV_HEADER = ["speed_mps", "height_err_mm", "width_err_mm", "depth_err_mm"]


def load_calibration_csv(path) -> list[CalibrationSample]:
    """Read a calibration file: one row per replicate, header required."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise MapFormatError(f"{path}: empty calibration file") from None
        if [h.strip() for h in header] != CSV_HEADER:
            raise MapFormatError(
                f"{path}: header must be {','.join(CSV_HEADER)}"
            )
        samples = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 4:
                raise MapFormatError(f"{path}:{lineno}: expected 4 columns")
            try:
                vals = [float(c) for c in row]
            except ValueError:
                raise MapFormatError(
                    f"{path}:{lineno}: non-numeric cell in {row!r}"
                ) from None
            samples.append(CalibrationSample(*vals))
    return samples
