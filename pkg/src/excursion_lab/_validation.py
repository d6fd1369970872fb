"""Input validation helpers shared by the public functions and estimators."""

from __future__ import annotations

import numbers
from typing import NamedTuple

import numpy as np


class ValidationError(ValueError):
    """Raised when a parameter falls outside its documented domain."""


class ChartPoint(NamedTuple):
    """A point of the manifold given in one of its coordinate charts."""

    chart: int
    z: np.ndarray

    @property
    def scalar(self) -> complex:
        return complex(self.z[0])


def check_positive_int(value, name: str, minimum: int = 1) -> int:
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise ValidationError(f"{name} must be an integer, got {value!r}")
    if value < minimum:
        raise ValidationError(f"{name} must be >= {minimum}, got {value}")
    return int(value)


def check_unit_interval(value, name: str, *, open_left=False, open_right=False) -> float:
    u = float(value)
    if not np.isfinite(u):
        raise ValidationError(f"{name} must be finite, got {value!r}")
    lo_bad = u <= 0 if open_left else u < 0
    hi_bad = u >= 1 if open_right else u > 1
    if lo_bad or hi_bad:
        raise ValidationError(f"{name} must lie in the unit interval, got {value!r}")
    return u


def as_chart_point(point, m: int = 1) -> ChartPoint:
    """Coerce a complex scalar, a length-``m`` sequence or a ChartPoint."""
    if isinstance(point, ChartPoint):
        z = np.atleast_1d(np.asarray(point.z, dtype=complex))
        chart = int(point.chart)
    else:
        z = np.atleast_1d(np.asarray(point, dtype=complex))
        chart = 0
    if z.shape != (m,):
        raise ValidationError(f"expected {m} chart coordinate(s), got shape {z.shape}")
    if not np.all(np.isfinite(z)):
        raise ValidationError("chart coordinates must be finite")
    return ChartPoint(chart, z)


def as_point_arrays(charts, coords, m: int):
    """Return ``(charts, coords)`` as int array ``(k,)`` and complex ``(k, m)``."""
    coords = np.asarray(coords, dtype=complex)
    if coords.ndim == 1 and m == 1:
        coords = coords[:, None]
    elif coords.ndim == 1:
        coords = coords[None, :]
    if coords.ndim != 2 or coords.shape[1] != m:
        raise ValidationError(f"coordinates must have shape (k, {m}), got {coords.shape}")
    k = coords.shape[0]
    if charts is None:
        charts = np.zeros(k, dtype=int)
    else:
        charts = np.broadcast_to(np.asarray(charts, dtype=int), (k,)).copy()
    return charts, coords
