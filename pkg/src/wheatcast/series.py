"""Core time-series math: calendars, smoothing, interpolation, scaling, and error metrics.

Everything here is a pure function over immutable inputs; series values are
stored as read-only float64 arrays so instances can be shared across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateInputError,
    InvalidInputError,
    InvalidParameterError,
)

__all__ = [
    "MonthlySeries",
    "YearlySeries",
    "MinMaxScaler",
    "month_ordinal",
    "ordinal_to_year_month",
    "format_year_month",
    "moving_average_filter",
    "interpolate_yearly_to_monthly",
    "pearson_correlation",
    "minmax_fit",
    "minmax_apply",
    "minmax_invert",
    "rmse",
    "mape",
]


def month_ordinal(year: int, month: int) -> int:
    """Absolute month number (Jan of year 0 == 0); months are 1..12."""
    if not 1 <= month <= 12:
        raise InvalidParameterError(f"month must be in 1..12, got {month}")
    return year * 12 + (month - 1)


def ordinal_to_year_month(ordinal: int) -> tuple[int, int]:
    """Inverse of :func:`month_ordinal`."""
    return ordinal // 12, ordinal % 12 + 1


def format_year_month(year: int, month: int) -> str:
    return f"{year:04d}-{month:02d}"


def _as_finite_array(values, what: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise InvalidInputError(f"{what} must be one-dimensional, got shape {arr.shape}")
    if arr.size == 0:
        raise InvalidInputError(f"{what} must be non-empty")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{what} contains non-finite values")
    arr = arr.copy()
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class MonthlySeries:
    """Gap-free monthly sequence anchored at a (year, month) calendar start.

    The universal carrier for prices and monthly covariates: one value per
    consecutive month, no missing entries, all values finite.
    """

    start: tuple[int, int]
    values: np.ndarray
    unit: str = ""

    def __post_init__(self):
        year, month = self.start
        month_ordinal(year, month)  # validates the month
        object.__setattr__(self, "values", _as_finite_array(self.values, "values"))

    def __len__(self) -> int:
        return int(self.values.size)

    @property
    def start_ordinal(self) -> int:
        return month_ordinal(*self.start)

    @property
    def end(self) -> tuple[int, int]:
        """(year, month) of the final sample."""
        return ordinal_to_year_month(self.start_ordinal + len(self) - 1)

    def dates(self) -> list[tuple[int, int]]:
        o = self.start_ordinal
        return [ordinal_to_year_month(o + i) for i in range(len(self))]

    def date_at(self, i: int) -> tuple[int, int]:
        if not 0 <= i < len(self):
            raise InvalidParameterError(f"index {i} out of range for series of length {len(self)}")
        return ordinal_to_year_month(self.start_ordinal + i)

    def slice_ordinals(self, first: int, last: int) -> "MonthlySeries":
        """Sub-series covering absolute months first..last inclusive."""
        lo = first - self.start_ordinal
        hi = last - self.start_ordinal + 1
        if lo < 0 or hi > len(self) or lo >= hi:
            raise InvalidParameterError("requested range falls outside the series")
        return MonthlySeries(ordinal_to_year_month(first), self.values[lo:hi], self.unit)

    def with_values(self, values) -> "MonthlySeries":
        return MonthlySeries(self.start, values, self.unit)


@dataclass(frozen=True)
class YearlySeries:
    """One value per consecutive calendar year (growth rate, production figures)."""

    start_year: int
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _as_finite_array(self.values, "values"))

    def __len__(self) -> int:
        return int(self.values.size)

    @property
    def end_year(self) -> int:
        return self.start_year + len(self) - 1


def moving_average_filter(s: MonthlySeries, w: int) -> MonthlySeries:
    """Forward moving average: y[i] = mean(x[i .. i+w-1]), tail windows shrink.

    Output has the same length and start as the input, so train/test splits
    keep their sizes under smoothing. w=1 is the identity.
    """
    if w < 1:
        raise InvalidParameterError(f"window length must be >= 1, got {w}")
    x = s.values
    n = x.size
    # cumulative-sum formulation: full windows where they fit, suffix means after
    csum = np.concatenate(([0.0], np.cumsum(x)))
    idx = np.arange(n)
    hi = np.minimum(idx + w, n)
    y = (csum[hi] - csum[idx]) / (hi - idx)
    return s.with_values(y)


def interpolate_yearly_to_monthly(s: YearlySeries) -> MonthlySeries:
    """Map a yearly series onto months: anchors at each January, linear in between.

    Months past the final January hold the last yearly value, so the output
    always spans exactly 12 * n_years months.
    """
    n = len(s)
    months = np.arange(12 * n, dtype=np.float64)
    anchors = np.arange(n, dtype=np.float64) * 12.0
    out = np.interp(months, anchors, s.values)  # np.interp holds the last anchor value
    return MonthlySeries((s.start_year, 1), out)


def pearson_correlation(a, b) -> float:
    """Standard Pearson product-moment correlation of two equal-length sequences."""
    x = np.asarray(a, dtype=np.float64)
    y = np.asarray(b, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise InvalidInputError(f"inputs must be equal-length vectors, got {x.shape} and {y.shape}")
    if x.size < 2:
        raise InvalidInputError("need at least two samples")
    xd = x - x.mean()
    yd = y - y.mean()
    sx = float(np.dot(xd, xd))
    sy = float(np.dot(yd, yd))
    if sx == 0.0 or sy == 0.0:
        raise DegenerateInputError("zero variance input has no defined correlation")
    return float(np.dot(xd, yd) / np.sqrt(sx * sy))


@dataclass(frozen=True)
class MinMaxScaler:
    """Per-column minimum/maximum captured on fitting data.

    apply maps fitted min -> 0 and max -> 1 (constant columns map to 0);
    invert is the exact linear inverse on non-constant columns.
    """

    mins: np.ndarray
    maxs: np.ndarray

    def __post_init__(self):
        mins = np.asarray(self.mins, dtype=np.float64).copy()
        maxs = np.asarray(self.maxs, dtype=np.float64).copy()
        if mins.shape != maxs.shape or mins.ndim != 1:
            raise InvalidInputError("mins and maxs must be equal-length vectors")
        if np.any(maxs < mins):
            raise InvalidInputError("max < min in scaler state")
        mins.flags.writeable = False
        maxs.flags.writeable = False
        object.__setattr__(self, "mins", mins)
        object.__setattr__(self, "maxs", maxs)

    @property
    def n_columns(self) -> int:
        return int(self.mins.size)

    @property
    def spans(self) -> np.ndarray:
        span = self.maxs - self.mins
        return np.where(span == 0.0, 1.0, span)


def _check_scaler_width(scaler: MinMaxScaler, matrix: np.ndarray) -> np.ndarray:
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim == 1:
        m = m[:, None]
    if m.ndim != 2 or m.shape[1] != scaler.n_columns:
        raise InvalidInputError(
            f"matrix has {m.shape[-1] if m.ndim else 0} columns, scaler expects {scaler.n_columns}"
        )
    return m


def minmax_fit(columns) -> MinMaxScaler:
    """Fit a min-max scaler on a (rows x columns) matrix."""
    m = np.asarray(columns, dtype=np.float64)
    if m.ndim == 1:
        m = m[:, None]
    if m.ndim != 2 or m.size == 0:
        raise InvalidInputError("fit data must be a non-empty matrix")
    if not np.all(np.isfinite(m)):
        raise InvalidInputError("fit data contains non-finite values")
    return MinMaxScaler(m.min(axis=0), m.max(axis=0))


def minmax_apply(scaler: MinMaxScaler, matrix) -> np.ndarray:
    m = _check_scaler_width(scaler, matrix)
    return (m - scaler.mins) / scaler.spans


def minmax_invert(scaler: MinMaxScaler, matrix) -> np.ndarray:
    m = _check_scaler_width(scaler, matrix)
    return m * scaler.spans + scaler.mins


def _paired(actual, predicted) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(actual, dtype=np.float64).ravel()
    p = np.asarray(predicted, dtype=np.float64).ravel()
    if a.size != p.size:
        raise InvalidInputError(f"length mismatch: {a.size} actual vs {p.size} predicted")
    if a.size == 0:
        raise InvalidInputError("empty input")
    return a, p


def rmse(actual, predicted) -> float:
    """Root mean squared error."""
    a, p = _paired(actual, predicted)
    return float(np.sqrt(np.mean((a - p) ** 2)))


def mape(actual, predicted) -> float:
    """Mean absolute percentage error, 100 * mean(|a - p| / |a|).

    Zero actuals are rejected rather than clamped: the denominators here are
    prices, which are strictly positive.
    """
    a, p = _paired(actual, predicted)
    if np.any(a == 0.0):
        raise DegenerateInputError("actual values contain zero; MAPE is undefined")
    return float(100.0 * np.mean(np.abs(a - p) / np.abs(a)))
