"""Feature alignment, chronological splitting, windowed dataset construction, and CSV ingestion.

The four prediction cases share one windowing rule: stride-1 sliding windows
over an aligned monthly table, inputs drawn from the selected features and
targets drawn from the price column only, strictly after the input rows.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    DataFormatError,
    InsufficientDataError,
    InvalidInputError,
    InvalidParameterError,
)
from .series import (
    MonthlySeries,
    YearlySeries,
    format_year_month,
    interpolate_yearly_to_monthly,
    month_ordinal,
    ordinal_to_year_month,
)

__all__ = [
    "COVARIATE_ORDER",
    "AlignedTable",
    "CaseSpec",
    "SupervisedWindows",
    "SplitSpec",
    "align",
    "split_train_test",
    "build_windows",
    "canonical_cases",
    "load_price_csv",
    "load_covariate_csv",
]

# Canonical covariate column order. The default pipeline uses the first five
# alongside the price target (six features total); average temperature is
# generated and validated but not part of the six-feature cases.
COVARIATE_ORDER = (
    "domestic_consumption",
    "growth_rate",
    "province_production",
    "national_production",
    "rainfall",
    "average_temperature",
)

TARGET_NAME = "price"


@dataclass(frozen=True)
class AlignedTable:
    """Price target plus named covariate columns on one shared monthly index."""

    target: MonthlySeries
    covariate_names: tuple[str, ...]
    covariate_columns: np.ndarray  # (n_rows, n_covariates), may be empty

    def __post_init__(self):
        cols = np.asarray(self.covariate_columns, dtype=np.float64)
        if cols.ndim != 2:
            cols = cols.reshape(len(self.target), len(self.covariate_names))
        if cols.shape != (len(self.target), len(self.covariate_names)):
            raise InvalidInputError(
                f"covariate matrix shape {cols.shape} does not match "
                f"{len(self.target)} rows x {len(self.covariate_names)} columns"
            )
        if len(set(self.covariate_names)) != len(self.covariate_names):
            raise InvalidInputError("duplicate covariate names")
        cols = cols.copy()
        cols.flags.writeable = False
        object.__setattr__(self, "covariate_columns", cols)
        object.__setattr__(self, "covariate_names", tuple(self.covariate_names))

    @property
    def n_rows(self) -> int:
        return len(self.target)

    @property
    def start(self) -> tuple[int, int]:
        return self.target.start

    @property
    def feature_names(self) -> tuple[str, ...]:
        """Covariates in canonical order with the target appended last."""
        return self.covariate_names + (TARGET_NAME,)

    @property
    def n_features(self) -> int:
        return len(self.covariate_names) + 1

    def feature_matrix(self) -> np.ndarray:
        """(n_rows, n_features) matrix; target is the last column."""
        return np.column_stack([self.covariate_columns, self.target.values]) \
            if self.covariate_names else self.target.values[:, None].copy()

    def date_at(self, i: int) -> tuple[int, int]:
        return self.target.date_at(i)

    def with_target(self, target: MonthlySeries) -> "AlignedTable":
        if len(target) != self.n_rows or target.start != self.start:
            raise InvalidInputError("replacement target must keep the table's index")
        return AlignedTable(target, self.covariate_names, self.covariate_columns)


@dataclass(frozen=True)
class CaseSpec:
    """One prediction configuration: feature count, input months, horizon."""

    case_id: int
    n_features: int
    input_months: int
    horizon: int

    def __post_init__(self):
        if self.case_id not in (1, 2, 3, 4):
            raise InvalidParameterError(f"case_id must be 1..4, got {self.case_id}")
        if self.n_features not in (1, 6) or self.input_months not in (12, 24) or self.horizon not in (1, 12):
            raise InvalidParameterError(f"unsupported case geometry: {self}")

    @property
    def min_rows(self) -> int:
        return self.input_months + self.horizon


def canonical_cases() -> list[CaseSpec]:
    """The four canonical cases, in order."""
    return [
        CaseSpec(1, 1, 12, 1),
        CaseSpec(2, 6, 12, 1),
        CaseSpec(3, 1, 24, 12),
        CaseSpec(4, 6, 24, 12),
    ]


@dataclass(frozen=True)
class SupervisedWindows:
    """Sliding-window supervised dataset: inputs (n, input_months, n_features), targets (n, horizon)."""

    inputs: np.ndarray
    targets: np.ndarray
    feature_names: tuple[str, ...]
    window_end_dates: tuple[tuple[int, int], ...]  # calendar of each window's last input row

    def __post_init__(self):
        inputs = np.asarray(self.inputs, dtype=np.float64)
        targets = np.asarray(self.targets, dtype=np.float64)
        if inputs.ndim != 3 or targets.ndim != 2 or inputs.shape[0] != targets.shape[0]:
            raise InvalidInputError(
                f"inconsistent window tensors: inputs {inputs.shape}, targets {targets.shape}"
            )
        if inputs.shape[2] != len(self.feature_names):
            raise InvalidInputError("feature_names does not match input width")
        if len(self.window_end_dates) != inputs.shape[0]:
            raise InvalidInputError("window_end_dates does not match window count")
        inputs = inputs.copy()
        targets = targets.copy()
        inputs.flags.writeable = False
        targets.flags.writeable = False
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "targets", targets)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        object.__setattr__(self, "window_end_dates", tuple(self.window_end_dates))

    @property
    def n_windows(self) -> int:
        return int(self.inputs.shape[0])

    @property
    def input_months(self) -> int:
        return int(self.inputs.shape[1])

    @property
    def n_features(self) -> int:
        return int(self.inputs.shape[2])

    @property
    def horizon(self) -> int:
        return int(self.targets.shape[1])

    @property
    def target_feature_index(self) -> int:
        return self.feature_names.index(TARGET_NAME)

    def target_dates(self, k: int) -> list[tuple[int, int]]:
        """Calendar months covered by window k's targets."""
        end = month_ordinal(*self.window_end_dates[k])
        return [ordinal_to_year_month(end + 1 + h) for h in range(self.horizon)]


@dataclass(frozen=True)
class SplitSpec:
    """Chronological split: training ends at train_end (inclusive), test follows."""

    train_end: tuple[int, int]

    def __post_init__(self):
        month_ordinal(*self.train_end)


def align(
    target: MonthlySeries,
    yearly_covs: dict[str, YearlySeries] | None = None,
    monthly_covs: dict[str, MonthlySeries] | None = None,
) -> AlignedTable:
    """Put the target and all covariates on one monthly index.

    Yearly covariates are linearly interpolated to months first; every column
    is then trimmed to the intersection of all ranges. Column order follows
    the canonical covariate order, with unknown names appended alphabetically.
    """
    yearly_covs = dict(yearly_covs or {})
    monthly_covs = dict(monthly_covs or {})
    dup = set(yearly_covs) & set(monthly_covs)
    if dup:
        raise InvalidInputError(f"duplicate covariate names: {sorted(dup)}")

    monthly: dict[str, MonthlySeries] = {name: interpolate_yearly_to_monthly(s) for name, s in yearly_covs.items()}
    monthly.update(monthly_covs)

    lo = target.start_ordinal
    hi = target.start_ordinal + len(target) - 1
    for s in monthly.values():
        lo = max(lo, s.start_ordinal)
        hi = min(hi, s.start_ordinal + len(s) - 1)
    if lo > hi:
        raise InvalidInputError("covariates and target have no overlapping months")

    def canon_key(name: str):
        try:
            return (0, COVARIATE_ORDER.index(name))
        except ValueError:
            return (1, name)

    names = tuple(sorted(monthly, key=canon_key))
    trimmed_target = target.slice_ordinals(lo, hi)
    if names:
        cols = np.column_stack([monthly[n].slice_ordinals(lo, hi).values for n in names])
    else:
        cols = np.empty((len(trimmed_target), 0))
    return AlignedTable(trimmed_target, names, cols)


def split_train_test(table: AlignedTable, spec: SplitSpec) -> tuple[AlignedTable, AlignedTable]:
    """Split rows chronologically at spec.train_end; both halves must be non-empty."""
    cut = month_ordinal(*spec.train_end)
    first = table.target.start_ordinal
    last = first + table.n_rows - 1
    if not first <= cut < last:
        raise InvalidParameterError(
            f"train_end {format_year_month(*spec.train_end)} must lie strictly inside "
            f"{format_year_month(*ordinal_to_year_month(first))}.."
            f"{format_year_month(*ordinal_to_year_month(last))}"
        )
    k = cut - first + 1
    train = AlignedTable(
        table.target.slice_ordinals(first, cut),
        table.covariate_names,
        table.covariate_columns[:k],
    )
    test = AlignedTable(
        table.target.slice_ordinals(cut + 1, last),
        table.covariate_names,
        table.covariate_columns[k:],
    )
    return train, test


def build_windows(table: AlignedTable, case: CaseSpec) -> SupervisedWindows:
    """Stride-1 sliding windows for one case.

    n_features == 1 selects the target column only; otherwise the table width
    must equal the case's feature count. Targets always come from the price
    column and start at the month after the window's last input row.
    """
    if case.n_features == 1:
        matrix = table.target.values[:, None]
        names = (TARGET_NAME,)
    else:
        if table.n_features != case.n_features:
            raise InvalidInputError(
                f"case {case.case_id} needs {case.n_features} features, table has {table.n_features}"
            )
        matrix = table.feature_matrix()
        names = table.feature_names

    n = table.n_rows
    count = n - case.input_months - case.horizon + 1
    if count < 1:
        raise InsufficientDataError(
            f"need at least {case.min_rows} rows for case {case.case_id}, got {n}"
        )

    t = case.input_months
    inputs = np.stack([matrix[k : k + t] for k in range(count)])
    targets = np.stack(
        [table.target.values[k + t : k + t + case.horizon] for k in range(count)]
    )
    start = table.target.start_ordinal
    end_dates = tuple(ordinal_to_year_month(start + k + t - 1) for k in range(count))
    return SupervisedWindows(inputs, targets, names, end_dates)


# ---------------------------------------------------------------------------
# CSV ingestion (strict: exact headers, no gaps, no duplicates)
# ---------------------------------------------------------------------------

def _read_rows(path: Path, expected_header: str) -> list[tuple[str, str]]:
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataFormatError(f"{path}: cannot read: {exc}") from exc
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise DataFormatError(f"{path}: empty file")
    if lines[0].strip() != expected_header:
        raise DataFormatError(f"{path}: expected header '{expected_header}', got '{lines[0].strip()}'")
    rows = []
    for i, ln in enumerate(lines[1:], start=2):
        parts = ln.split(",")
        if len(parts) != 2:
            raise DataFormatError(f"{path}:{i}: expected two columns, got {len(parts)}")
        rows.append((parts[0].strip(), parts[1].strip()))
    if not rows:
        raise DataFormatError(f"{path}: no data rows")
    return rows


def _parse_value(path: Path, line: int, raw: str) -> float:
    try:
        v = float(raw)
    except ValueError as exc:
        raise DataFormatError(f"{path}:{line}: not a number: '{raw}'") from exc
    if not np.isfinite(v):
        raise DataFormatError(f"{path}:{line}: non-finite value")
    return v


def _parse_monthly(path: Path, rows: list[tuple[str, str]], unit: str) -> MonthlySeries:
    ordinals, values = [], []
    for i, (date, raw) in enumerate(rows, start=2):
        parts = date.split("-")
        if len(parts) != 2 or len(parts[0]) != 4 or len(parts[1]) != 2:
            raise DataFormatError(f"{path}:{i}: expected YYYY-MM date, got '{date}'")
        try:
            year, month = int(parts[0]), int(parts[1])
            ordinals.append(month_ordinal(year, month))
        except (ValueError, InvalidParameterError) as exc:
            raise DataFormatError(f"{path}:{i}: bad date '{date}'") from exc
        values.append(_parse_value(path, i, raw))
    for prev, cur, i in zip(ordinals, ordinals[1:], range(3, len(ordinals) + 3)):
        if cur == prev:
            raise DataFormatError(f"{path}:{i}: duplicate date")
        if cur != prev + 1:
            raise DataFormatError(f"{path}:{i}: dates must be consecutive months with no gaps")
    return MonthlySeries(ordinal_to_year_month(ordinals[0]), values, unit)


def load_price_csv(path: str | Path, unit: str = "PKR/100kg") -> MonthlySeries:
    """Read a district price file: header `date,price`, dates `YYYY-MM`, gap-free."""
    p = Path(path)
    return _parse_monthly(p, _read_rows(p, "date,price"), unit)


def load_covariate_csv(path: str | Path) -> MonthlySeries | YearlySeries:
    """Read a covariate file: header `date,value`; `YYYY-MM` dates give a monthly
    series, `YYYY` dates a yearly one. Mixed granularity is an error."""
    p = Path(path)
    rows = _read_rows(p, "date,value")
    is_yearly = "-" not in rows[0][0]
    if is_yearly:
        years, values = [], []
        for i, (date, raw) in enumerate(rows, start=2):
            if "-" in date or len(date) != 4:
                raise DataFormatError(f"{p}:{i}: expected YYYY date, got '{date}'")
            try:
                years.append(int(date))
            except ValueError as exc:
                raise DataFormatError(f"{p}:{i}: bad year '{date}'") from exc
            values.append(_parse_value(p, i, raw))
        for prev, cur, i in zip(years, years[1:], range(3, len(years) + 3)):
            if cur == prev:
                raise DataFormatError(f"{p}:{i}: duplicate year")
            if cur != prev + 1:
                raise DataFormatError(f"{p}:{i}: years must be consecutive with no gaps")
        return YearlySeries(years[0], values)
    return _parse_monthly(p, rows, "")
