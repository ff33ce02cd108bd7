"""Long-format CSV ingestion with validation, plus the inverse writer.

All loaders take a :class:`ColumnSchema` naming which columns play
which roles.  Period labels must be consecutive integers; they are
remapped to 1..T internally and the original first label is retained
so results can be reported against the source calendar.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

from .alt import TvPanelDataset
from .errors import (
    BadPeriodLabels,
    DataError,
    EmptyPeriod,
    NonConstantCovariate,
    SpecMismatch,
    UnbalancedPanel,
)
from .panel import PanelDataset
from .rc import RcDataset

__all__ = [
    "ColumnSchema",
    "load_panel_csv",
    "load_rc_csv",
    "load_tv_panel_csv",
    "load_multigroup_csv",
    "write_panel_csv",
    "infer_covariates",
]


@dataclass(frozen=True)
class ColumnSchema:
    """Column-name roles for long-format files.

    ``covariates`` names the covariate columns in order; the intercept
    is never a file column, it is prepended on load.  ``unit`` and
    ``group`` are only consulted by the loaders that need them.
    """

    outcome: str = "y"
    period: str = "period"
    treated: str = "d"
    unit: str = "id"
    group: str = "group"
    covariates: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "covariates", tuple(self.covariates))

    @classmethod
    def from_dict(cls, d: dict) -> "ColumnSchema":
        known = {"outcome", "period", "treated", "unit", "group", "covariates"}
        bad = set(d) - known
        if bad:
            raise SpecMismatch(f"unknown schema keys: {sorted(bad)}")
        return cls(**d)


def _read_csv(path) -> pd.DataFrame:
    # round_trip parsing: the default fast parser can be 1 ulp off, which
    # would break write_panel_csv -> load_panel_csv exactness
    try:
        return pd.read_csv(path, float_precision="round_trip")
    except OSError as e:
        raise DataError(f"cannot read {path}: {e}") from e
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise DataError(f"cannot parse {path} as CSV: {e}") from e


def infer_covariates(path, schema: ColumnSchema) -> tuple[str, ...]:
    """Header columns that play no named role, in file order.

    The default when a caller has no explicit covariate list: every
    column that is not the outcome, period, treated, unit, or group
    column is taken to be a covariate.
    """
    try:
        header = pd.read_csv(path, nrows=0).columns.tolist()
    except OSError as e:
        raise DataError(f"cannot read {path}: {e}") from e
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise DataError(f"cannot parse {path} as CSV: {e}") from e
    roles = {schema.outcome, schema.period, schema.treated, schema.unit, schema.group}
    return tuple(c for c in header if c not in roles)


def _require_columns(df: pd.DataFrame, names: list[str]) -> None:
    missing = [c for c in names if c not in df.columns]
    if missing:
        raise SpecMismatch(f"input file lacks columns {missing}; have {list(df.columns)}")


def _integer_periods(raw: pd.Series) -> tuple[np.ndarray, int]:
    """Validate and remap period labels to 1..T; returns (remapped, first label)."""
    vals = pd.to_numeric(raw, errors="coerce")
    if vals.isna().any():
        raise BadPeriodLabels(f"non-numeric period labels: {sorted(raw[vals.isna()].unique())}")
    arr = vals.to_numpy()
    if not np.all(arr == np.round(arr)):
        raise BadPeriodLabels("period labels must be integers")
    arr = arr.astype(np.int64)
    lo, hi = int(arr.min()), int(arr.max())
    present = set(np.unique(arr).tolist())
    gaps = [p for p in range(lo, hi + 1) if p not in present]
    if gaps:
        raise EmptyPeriod(f"no rows for period labels {gaps}")
    return arr - lo + 1, lo


def _check_constant_within(df: pd.DataFrame, unit_col: str, col: str) -> None:
    counts = df.groupby(unit_col)[col].nunique()
    bad = counts[counts > 1]
    if len(bad) > 0:
        raise NonConstantCovariate(unit=bad.index[0], column=col)


def _load_balanced(path, schema: ColumnSchema, extra_cols: list[str]):
    """Shared panel plumbing: balance, remap, sort.

    Returns (sorted df with periods remapped to 1..T, t_total, first
    original period label).
    """
    df = _read_csv(path)
    needed = [schema.unit, schema.period, schema.outcome, schema.treated]
    _require_columns(df, needed + extra_cols + list(schema.covariates))

    periods, first_label = _integer_periods(df[schema.period])
    df = df.assign(**{schema.period: periods})
    t_total = int(periods.max())

    dup = df.duplicated([schema.unit, schema.period])
    if dup.any():
        ids = sorted(df.loc[dup, schema.unit].unique().tolist())
        raise UnbalancedPanel(ids, f"duplicate (unit, period) rows for ids {ids}")
    counts = df.groupby(schema.unit)[schema.period].count()
    short = counts[counts != t_total]
    if len(short) > 0:
        raise UnbalancedPanel(sorted(short.index.tolist()))

    _check_constant_within(df, schema.unit, schema.treated)
    return df.sort_values([schema.unit, schema.period]), t_total, first_label


def _wide(df: pd.DataFrame, schema: ColumnSchema, col: str, t_total: int) -> np.ndarray:
    arr = df[col].to_numpy(dtype=np.float64)
    return arr.reshape(-1, t_total)


def load_panel_csv(path, schema: ColumnSchema, t_star: int) -> PanelDataset:
    """Load a balanced panel from a long-format CSV.

    Covariates must be constant within unit here; use
    :func:`load_tv_panel_csv` for the covariate-history estimator.

    Raises
    ------
    UnbalancedPanel
        Listing the unit ids with missing or duplicated periods.
    NonConstantCovariate
        Naming the first offending unit and column.
    BadPeriodLabels, EmptyPeriod
        On non-integer or gapped period labels.
    """
    df, t_total, _ = _load_balanced(path, schema, [])
    for c in schema.covariates:
        _check_constant_within(df, schema.unit, c)
    y = _wide(df, schema, schema.outcome, t_total)
    first = df.groupby(schema.unit, sort=True).first()
    n = y.shape[0]
    z = np.column_stack(
        [np.ones(n)] + [first[c].to_numpy(dtype=np.float64) for c in schema.covariates]
    )
    d = first[schema.treated].to_numpy(dtype=np.float64)
    return PanelDataset(y=y, z=z, d=d, t_star=t_star)


def load_tv_panel_csv(path, schema: ColumnSchema, t_star: int) -> TvPanelDataset:
    """Load a balanced panel whose covariates may vary by period."""
    df, t_total, _ = _load_balanced(path, schema, [])
    y = _wide(df, schema, schema.outcome, t_total)
    n = y.shape[0]
    x = np.empty((n, t_total, len(schema.covariates)))
    for j, c in enumerate(schema.covariates):
        x[:, :, j] = _wide(df, schema, c, t_total)
    first = df.groupby(schema.unit, sort=True).first()
    d = first[schema.treated].to_numpy(dtype=np.float64)
    return TvPanelDataset(y=y, x=x, d=d, t_star=t_star)


def load_rc_csv(path, schema: ColumnSchema, t_star: int) -> RcDataset:
    """Load pooled repeated cross sections (one period per row, no unit ids)."""
    df = _read_csv(path)
    _require_columns(
        df, [schema.period, schema.outcome, schema.treated] + list(schema.covariates)
    )
    periods, _ = _integer_periods(df[schema.period])
    y = df[schema.outcome].to_numpy(dtype=np.float64)
    n = y.shape[0]
    z = np.column_stack(
        [np.ones(n)] + [df[c].to_numpy(dtype=np.float64) for c in schema.covariates]
    )
    d = df[schema.treated].to_numpy(dtype=np.float64)
    return RcDataset(y=y, z=z, d=d, t=periods, t_star=t_star)


@dataclass(frozen=True)
class MultiGroupDataset:
    """Panel with staggered adoption: group = first treated period, 0 = never.

    Stored in levels like :class:`PanelDataset` but with the binary
    indicator replaced by the adoption-period label.  Treated groups
    must leave at least two pre-treatment periods (g >= 3).
    """

    y: np.ndarray
    z: np.ndarray
    group: np.ndarray
    never_value: int = 0

    def __post_init__(self):
        y = np.asarray(self.y, dtype=np.float64)
        z = np.asarray(self.z, dtype=np.float64)
        g = np.asarray(self.group, dtype=np.int64)
        if y.ndim != 2 or z.ndim != 2 or g.ndim != 1:
            raise SpecMismatch("y must be (n,T), z (n,K), group (n,)")
        if y.shape[0] != z.shape[0] or y.shape[0] != g.shape[0]:
            raise SpecMismatch("y, z, group row counts differ")
        t_total = y.shape[1]
        if not (g == self.never_value).any():
            raise SpecMismatch("never-treated group is empty")
        treated = np.unique(g[g != self.never_value])
        bad = [int(v) for v in treated if not 3 <= v <= t_total]
        if bad:
            raise SpecMismatch(
                f"group labels {bad} outside [3, {t_total}]; "
                "each treated group needs two pre-treatment periods"
            )
        if not np.all(z[:, 0] == 1.0):
            raise SpecMismatch("z must carry an all-ones intercept in column 0")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "group", g)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def t_total(self) -> int:
        return self.y.shape[1]

    @property
    def groups(self) -> tuple[int, ...]:
        g = self.group
        return tuple(int(v) for v in np.unique(g[g != self.never_value]))


def load_multigroup_csv(path, schema: ColumnSchema, never_value: int = 0) -> MultiGroupDataset:
    """Load a staggered-adoption panel.

    The group column holds the period label (same calendar as the
    period column) at which the unit is first treated, or
    ``never_value`` for never-treated units; labels are remapped along
    with the periods.
    """
    df, t_total, first_label = _load_balanced(path, schema, [schema.group])
    for c in schema.covariates:
        _check_constant_within(df, schema.unit, c)
    _check_constant_within(df, schema.unit, schema.group)

    y = _wide(df, schema, schema.outcome, t_total)
    firsts = df.groupby(schema.unit, sort=True).first()
    n = y.shape[0]
    z = np.column_stack(
        [np.ones(n)] + [firsts[c].to_numpy(dtype=np.float64) for c in schema.covariates]
    )
    raw_g = firsts[schema.group].to_numpy()
    if not np.all(raw_g == np.round(raw_g)):
        raise BadPeriodLabels("group labels must be integer period labels")
    raw_g = raw_g.astype(np.int64)
    g = np.where(raw_g == never_value, 0, raw_g - first_label + 1)
    return MultiGroupDataset(y=y, z=z, group=g, never_value=0)


def write_panel_csv(data: PanelDataset, path, schema: ColumnSchema | None = None) -> None:
    """Long-format inverse of :func:`load_panel_csv` (row order unit-major)."""
    if schema is None:
        schema = ColumnSchema(
            covariates=tuple(f"z{j}" for j in range(1, data.k))
        )
    if len(schema.covariates) != data.k - 1:
        raise SpecMismatch(
            f"schema names {len(schema.covariates)} covariates, data has {data.k - 1}"
        )
    n, t_total = data.n, data.t_total
    out = {
        schema.unit: np.repeat(np.arange(n), t_total),
        schema.period: np.tile(np.arange(1, t_total + 1), n),
        schema.outcome: data.y.ravel(),
        schema.treated: np.repeat(data.d, t_total),
    }
    for j, c in enumerate(schema.covariates, start=1):
        out[c] = np.repeat(data.z[:, j], t_total)
    pd.DataFrame(out).to_csv(path, index=False)
