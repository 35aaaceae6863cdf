"""Panel containers, CSV ingestion, and the baseline regression transforms.

A :class:`Panel` is an N x T array of values with an observation mask; missing
cells contribute nothing to any sum and per-period counts are recomputed from
the mask (no imputation).  :class:`RegressionData` pairs a response panel with
either period-level regressors shared across units or unit-specific regressor
panels.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import pandas as pd

__all__ = [
    "Panel",
    "RegressionData",
    "load_panel_csv",
    "load_common_regressors_csv",
    "load_regression_long_csv",
    "cross_section_averages",
    "aggregate_statistic",
    "within_transform",
    "pooled_ols",
]

_DEFAULT_SCHEMA = {"unit": "unit", "period": "period", "value": "value"}


@dataclass(frozen=True, eq=False)
class Panel:
    """An N x T panel of real values with an observation mask.

    Masked (unobserved) cells are stored as 0.0 and excluded from every
    computation through the mask.  Arrays are made read-only at construction,
    so instances are safe to share across threads.
    """

    values: np.ndarray
    observed: np.ndarray
    unit_labels: tuple | None = None
    period_labels: tuple | None = None

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        observed = np.array(self.observed, dtype=bool)
        if values.ndim != 2:
            raise ValueError("values must be a 2-d (unit, period) array")
        if observed.shape != values.shape:
            raise ValueError(
                f"observed mask shape {observed.shape} != values shape {values.shape}"
            )
        if not np.all(np.isfinite(values[observed])):
            raise ValueError("values must be finite wherever observed")
        nt = observed.sum(axis=0)
        if np.any(nt < 1):
            empty = int(np.argmin(nt))
            raise ValueError(f"period index {empty} has no observed units")
        values = np.where(observed, values, 0.0)
        values.setflags(write=False)
        observed.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "observed", observed)
        if self.unit_labels is not None:
            if len(self.unit_labels) != values.shape[0]:
                raise ValueError("unit_labels length mismatch")
            object.__setattr__(self, "unit_labels", tuple(self.unit_labels))
        if self.period_labels is not None:
            if len(self.period_labels) != values.shape[1]:
                raise ValueError("period_labels length mismatch")
            object.__setattr__(self, "period_labels", tuple(self.period_labels))

    @property
    def n_units(self) -> int:
        return self.values.shape[0]

    @property
    def n_periods(self) -> int:
        return self.values.shape[1]

    @property
    def nt_counts(self) -> np.ndarray:
        """Observed-unit count per period."""
        return self.observed.sum(axis=0)

    @property
    def n_observed(self) -> int:
        """Total observed cell count (sum of per-period counts)."""
        return int(self.observed.sum())

    @property
    def is_balanced(self) -> bool:
        return bool(self.observed.all())

    def with_values(self, values: np.ndarray) -> "Panel":
        """Same mask and labels, new values."""
        return Panel(values, self.observed, self.unit_labels, self.period_labels)

    def slice_periods(self, start: int, stop: int) -> "Panel":
        labels = None if self.period_labels is None else self.period_labels[start:stop]
        return Panel(self.values[:, start:stop], self.observed[:, start:stop],
                     self.unit_labels, labels)


@dataclass(frozen=True, eq=False)
class RegressionData:
    """Response panel plus regressors (exactly one regressor layout).

    ``x_common`` holds period-level regressors shared by every unit, shaped
    (T, d); ``x_panel`` holds unit-specific regressors shaped (N, T, d).
    """

    y: Panel
    x_common: np.ndarray | None = None
    x_panel: np.ndarray | None = None
    intercept: bool = True
    regressor_names: tuple | None = None

    def __post_init__(self):
        if (self.x_common is None) == (self.x_panel is None):
            raise ValueError("exactly one of x_common / x_panel must be provided")
        if self.x_common is not None:
            x = np.array(self.x_common, dtype=np.float64)
            if x.ndim == 1:
                x = x[:, None]
            if x.shape[0] != self.y.n_periods:
                raise ValueError("x_common period dimension must match y.n_periods")
            x.setflags(write=False)
            object.__setattr__(self, "x_common", x)
        else:
            x = np.array(self.x_panel, dtype=np.float64)
            if x.ndim == 2:
                x = x[:, :, None]
            if x.shape[:2] != (self.y.n_units, self.y.n_periods):
                raise ValueError("x_panel (unit, period) dimensions must match y")
            x.setflags(write=False)
            object.__setattr__(self, "x_panel", x)
        if not np.all(np.isfinite(x)):
            raise ValueError("regressors must be finite")
        if self.regressor_names is not None:
            if len(self.regressor_names) != self.n_regressors:
                raise ValueError("regressor_names length mismatch")
            object.__setattr__(self, "regressor_names", tuple(self.regressor_names))

    @property
    def n_regressors(self) -> int:
        x = self.x_common if self.x_common is not None else self.x_panel
        return x.shape[-1]

    def coefficient_names(self) -> list[str]:
        names = list(self.regressor_names or [f"x{j + 1}" for j in range(self.n_regressors)])
        return (["intercept"] + names) if self.intercept else names

    def regressor_cell(self) -> np.ndarray:
        """Regressors as an (N, T, d) array regardless of layout."""
        if self.x_panel is not None:
            return self.x_panel
        return np.broadcast_to(self.x_common[None, :, :],
                               (self.y.n_units, self.y.n_periods, self.n_regressors))

    def slice_periods(self, start: int, stop: int) -> "RegressionData":
        y = self.y.slice_periods(start, stop)
        if self.x_common is not None:
            return replace(self, y=y, x_common=self.x_common[start:stop])
        return replace(self, y=y, x_panel=self.x_panel[:, start:stop])


def _resolve_schema(schema: dict | None, required: tuple) -> dict:
    out = dict(_DEFAULT_SCHEMA)
    out.update(schema or {})
    missing = [k for k in required if k not in out]
    if missing:
        raise ValueError(f"schema must map the logical columns {missing}")
    return out


def _read_long_csv(source, schema: dict, value_cols: list[str]) -> pd.DataFrame:
    df = pd.read_csv(source)
    if df.shape[0] == 0:
        raise ValueError("CSV contains no data rows")
    cols = {schema["unit"], schema["period"], *(schema.get(c, c) for c in value_cols)}
    absent = sorted(cols - set(df.columns))
    if absent:
        raise ValueError(f"CSV is missing required column(s): {', '.join(absent)}")

    unit_col, period_col = schema["unit"], schema["period"]
    dup = df.duplicated(subset=[unit_col, period_col], keep=False)
    if dup.any():
        rows = (df.index[dup] + 2).tolist()[:10]  # header is row 1
        raise ValueError(f"duplicate (unit, period) pairs at CSV rows {rows}")

    for logical in value_cols:
        col = schema.get(logical, logical)
        numeric = pd.to_numeric(df[col], errors="coerce")
        bad = numeric.isna()
        if bad.any():
            rows = (df.index[bad] + 2).tolist()[:10]
            raise ValueError(f"non-numeric value(s) in column {col!r} at CSV rows {rows}")
        df[col] = numeric.astype(np.float64)
    return df


def _sorted_unique(values: pd.Series) -> list:
    uniq = values.unique().tolist()
    try:
        return sorted(uniq)
    except TypeError:
        return sorted(uniq, key=str)


def _pivot_long(df: pd.DataFrame, schema: dict, value_col: str):
    units = _sorted_unique(df[schema["unit"]])
    periods = _sorted_unique(df[schema["period"]])
    u_index = {u: i for i, u in enumerate(units)}
    p_index = {p: j for j, p in enumerate(periods)}
    values = np.zeros((len(units), len(periods)))
    observed = np.zeros((len(units), len(periods)), dtype=bool)
    rows = df[schema["unit"]].map(u_index).to_numpy()
    cols = df[schema["period"]].map(p_index).to_numpy()
    values[rows, cols] = df[value_col].to_numpy()
    observed[rows, cols] = True
    return values, observed, units, periods


def load_panel_csv(source, schema: dict | None = None) -> Panel:
    """Load a long-format CSV (unit, period, value rows) into a :class:`Panel`.

    Parameters
    ----------
    source : path or text stream
        CSV with a header row.  Missing cells are absent rows; there is no NA
        token.  Extra columns are ignored.
    schema : dict, optional
        Remaps the logical column names ``unit``, ``period``, ``value`` to the
        actual CSV headers.

    Periods are ordered by sorted label; duplicated (unit, period) pairs,
    non-numeric values, and empty files are rejected.
    """
    sch = _resolve_schema(schema, ("unit", "period", "value"))
    df = _read_long_csv(source, sch, ["value"])
    values, observed, units, periods = _pivot_long(df, sch, sch["value"])
    return Panel(values, observed, unit_labels=units, period_labels=periods)


def load_common_regressors_csv(source, period_col: str = "period"):
    """Load a period-indexed regressor CSV: one row per period, one column per regressor.

    Returns (period_labels, names, (T, d) array) with periods sorted ascending.
    """
    df = pd.read_csv(source)
    if df.shape[0] == 0:
        raise ValueError("CSV contains no data rows")
    if period_col not in df.columns:
        raise ValueError(f"CSV is missing required column(s): {period_col}")
    if df[period_col].duplicated().any():
        rows = (df.index[df[period_col].duplicated(keep=False)] + 2).tolist()[:10]
        raise ValueError(f"duplicate period rows at CSV rows {rows}")
    names = [c for c in df.columns if c != period_col]
    if not names:
        raise ValueError("regressor CSV has no regressor columns")
    for col in names:
        numeric = pd.to_numeric(df[col], errors="coerce")
        if numeric.isna().any():
            rows = (df.index[numeric.isna()] + 2).tolist()[:10]
            raise ValueError(f"non-numeric value(s) in column {col!r} at CSV rows {rows}")
        df[col] = numeric.astype(np.float64)
    df = df.sort_values(period_col, kind="mergesort").reset_index(drop=True)
    return df[period_col].tolist(), names, df[names].to_numpy(dtype=np.float64)


def load_regression_long_csv(source, y_col: str = "y",
                             regressor_cols: list[str] | None = None,
                             schema: dict | None = None,
                             intercept: bool = False) -> RegressionData:
    """Load a long CSV with columns (unit, period, y, x1..xd) into unit-specific
    regression data (x_panel layout).  Requires a balanced panel."""
    sch = _resolve_schema(schema, ("unit", "period"))
    probe = pd.read_csv(source, nrows=0)
    if regressor_cols is None:
        reserved = {sch["unit"], sch["period"], y_col}
        regressor_cols = [c for c in probe.columns if c not in reserved]
    if not regressor_cols:
        raise ValueError("no regressor columns found")
    if hasattr(source, "seek"):
        source.seek(0)
    df = _read_long_csv(source, sch, [y_col, *regressor_cols])

    y_vals, observed, units, periods = _pivot_long(df, sch, y_col)
    if not observed.all():
        raise ValueError("regression CSV must be a balanced panel (every unit x period present)")
    y = Panel(y_vals, observed, unit_labels=units, period_labels=periods)
    x = np.zeros((len(units), len(periods), len(regressor_cols)))
    for j, col in enumerate(regressor_cols):
        x[:, :, j], _, _, _ = _pivot_long(df, sch, col)
    return RegressionData(y=y, x_panel=x, intercept=intercept,
                          regressor_names=tuple(regressor_cols))


def cross_section_averages(panel: Panel) -> np.ndarray:
    """Per-period aggregates: sum of observed values at t divided by sqrt(N_t).

    Balanced panels reduce to the column sums over sqrt(N).
    """
    sums = panel.values.sum(axis=0)
    return sums / np.sqrt(panel.nt_counts)


def aggregate_statistic(panel: Panel) -> float:
    """Grand aggregate: sum over observed cells divided by sqrt(total cell count).

    Equals ``sum_t sqrt(N_t / NN) * ubar_t`` with ``ubar`` the per-period
    aggregates and ``NN`` the observed count.
    """
    return float(panel.values.sum() / np.sqrt(panel.n_observed))


def within_transform(data: RegressionData) -> RegressionData:
    """Remove each unit's time mean from the response and every regressor.

    Requires a balanced panel with unit-specific regressors (the fixed-effects
    path).  The returned data carries no intercept: demeaning annihilates it.
    """
    if data.x_panel is None:
        raise ValueError("within transform requires unit-specific regressors (x_panel)")
    if not data.y.is_balanced:
        raise ValueError("within transform requires a balanced panel")
    if data.y.n_periods < 2:
        raise ValueError("within transform needs at least 2 periods per unit")
    y_vals = data.y.values - data.y.values.mean(axis=1, keepdims=True)
    x = data.x_panel - data.x_panel.mean(axis=1, keepdims=True)
    return RegressionData(y=data.y.with_values(y_vals), x_panel=x, intercept=False,
                          regressor_names=data.regressor_names)


def _stacked_design(data: RegressionData):
    """Stack observed cells into (X, y) with intercept column first if requested."""
    mask = data.y.observed
    y = data.y.values[mask]
    cells = data.regressor_cell()[mask]  # (n_obs, d)
    if data.intercept:
        cells = np.column_stack([np.ones(len(y)), cells])
    return cells, y


def _first_dependent_column(x: np.ndarray) -> int:
    rank = 0
    for j in range(x.shape[1]):
        new_rank = np.linalg.matrix_rank(x[:, : j + 1])
        if new_rank == rank:
            return j
        rank = new_rank
    return -1


def pooled_ols(data: RegressionData):
    """Least squares over all observed cells.

    Returns
    -------
    coefficients : (k,) ndarray
        Intercept first when ``data.intercept`` is set.
    residuals : Panel
        Residual panel with the same observation mask as the response.

    The stacked system is solved by orthogonal decomposition; a rank-deficient
    design is rejected naming the first dependent column.
    """
    x, y = _stacked_design(data)
    coef, _, rank, _ = np.linalg.lstsq(x, y, rcond=None)
    if rank < x.shape[1]:
        j = _first_dependent_column(x)
        names = data.coefficient_names()
        raise ValueError(f"design is rank deficient at column {j} ({names[j]!r})")
    fitted_cells = data.regressor_cell() @ (coef[1:] if data.intercept else coef)
    if data.intercept:
        fitted_cells = fitted_cells + coef[0]
    resid = np.where(data.y.observed, data.y.values - fitted_cells, 0.0)
    return coef, data.y.with_values(resid)
