"""Resampling standard errors, pre-treatment tests, and J reporting.

The bootstrap resamples whole units for panel estimators (all of a
unit's periods move together) and whole rows for repeated cross
sections.  Replication r always draws from substream r of the root
seed, so results are bitwise reproducible for a fixed (seed, b) no
matter how replications are scheduled.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .alt import (
    TvPanelDataset,
    att_serial_uncorr,
    att_timevarying,
    fit_serial_uncorr,
    fit_timevarying,
)
from .comparators import did_att, lt_att
from .errors import (
    DataError,
    EstimationError,
    NoPrePeriods,
    TooManyFailures,
)
from .gmm import GmmFit, j_pvalue, psd_inverse
from .panel import AttSeries, ModelSpec, PanelDataset, att_series, estimate_gamma1
from .rc import RcDataset, estimate_att_rc

__all__ = [
    "ESTIMATORS",
    "BootstrapResult",
    "WaldResult",
    "OveridReport",
    "point_estimates",
    "bootstrap_att",
    "pretest_wald",
    "overid_report",
]

#: failure share above which the bootstrap aborts
MAX_FAILURE_SHARE = 0.05


def _est_ife_panel(data: PanelDataset, spec: ModelSpec) -> dict[int, float]:
    fit, params = estimate_gamma1(data, spec)
    return dict(att_series(params, fit, data).att)


def _est_ife_rc(data: RcDataset, spec: ModelSpec) -> dict[int, float]:
    return dict(estimate_att_rc(data, spec).att)


def _est_did(data: PanelDataset, spec: ModelSpec | None) -> dict[int, float]:
    return {t: did_att(data, t) for t in range(3, data.t_total + 1)}


def _est_lt(data: PanelDataset, spec: ModelSpec | None) -> dict[int, float]:
    return {t: lt_att(data, t) for t in range(3, data.t_total + 1)}


def _est_t3(data: PanelDataset, spec: ModelSpec | None) -> dict[int, float]:
    return dict(att_serial_uncorr(data, fit_serial_uncorr(data)).att)


def _est_t4(data: TvPanelDataset, spec: ModelSpec | None) -> dict[int, float]:
    return dict(att_timevarying(data, fit_timevarying(data)).att)


ESTIMATORS = {
    "ife-panel": _est_ife_panel,
    "ife-rc": _est_ife_rc,
    "did": _est_did,
    "lt": _est_lt,
    "t3": _est_t3,
    "t4": _est_t4,
}


def _resample(data, idx):
    if isinstance(data, PanelDataset):
        return PanelDataset(
            y=data.y[idx], z=data.z[idx], d=data.d[idx], t_star=data.t_star
        )
    if isinstance(data, RcDataset):
        return RcDataset(
            y=data.y[idx], z=data.z[idx], d=data.d[idx], t=data.t[idx],
            t_star=data.t_star,
        )
    if isinstance(data, TvPanelDataset):
        return TvPanelDataset(
            y=data.y[idx], x=data.x[idx], d=data.d[idx], t_star=data.t_star
        )
    raise TypeError(f"cannot resample {type(data).__name__}")


@dataclass(frozen=True)
class BootstrapResult:
    """Bootstrap summary per period.

    ``se`` is the replication standard deviation; ``ci_percentile``
    the (2.5%, 97.5%) empirical interval; ``ci_normal`` the
    point +- 1.96 se interval.  Replications whose estimation failed
    are excluded and counted in ``n_failed``.
    """

    point: dict[int, float]
    se: dict[int, float]
    ci_percentile: dict[int, tuple[float, float]]
    ci_normal: dict[int, tuple[float, float]]
    b: int
    n_failed: int


def point_estimates(data, spec: ModelSpec | None, estimator: str) -> dict[int, float]:
    """Per-period effect estimates for a registered estimator id."""
    if estimator not in ESTIMATORS:
        raise KeyError(f"unknown estimator {estimator!r}; have {sorted(ESTIMATORS)}")
    return ESTIMATORS[estimator](data, spec)


def bootstrap_att(
    data,
    spec: ModelSpec | None = None,
    estimator: str = "ife-panel",
    b: int = 1000,
    seed: int = 0,
) -> BootstrapResult:
    """Unit (or row) bootstrap of any registered estimator.

    Raises
    ------
    TooManyFailures
        If more than 5% of the replications fail to estimate.
    """
    if b < 100:
        raise ValueError(f"need at least 100 replications, got {b}")
    point = point_estimates(data, spec, estimator)
    periods = sorted(point)

    if isinstance(data, (PanelDataset, TvPanelDataset)):
        n = data.n
    else:
        n = data.n
    children = np.random.SeedSequence(seed).spawn(b)

    draws = np.full((b, len(periods)), np.nan)
    n_failed = 0
    for r in range(b):
        rng = np.random.default_rng(children[r])
        idx = rng.integers(0, n, size=n)
        try:
            est = ESTIMATORS[estimator](_resample(data, idx), spec)
        except (DataError, EstimationError):
            n_failed += 1
            continue
        draws[r] = [est[t] for t in periods]
    if n_failed > MAX_FAILURE_SHARE * b:
        raise TooManyFailures(f"{n_failed} of {b} bootstrap replications failed")

    ok = ~np.isnan(draws[:, 0])
    good = draws[ok]
    se = {}
    ci_p = {}
    ci_n = {}
    for j, t in enumerate(periods):
        col = good[:, j]
        s = float(col.std(ddof=1)) if col.shape[0] > 1 else 0.0
        se[t] = s
        lo, hi = np.percentile(col, [2.5, 97.5])
        ci_p[t] = (float(lo), float(hi))
        ci_n[t] = (point[t] - 1.96 * s, point[t] + 1.96 * s)
    return BootstrapResult(
        point=point, se=se, ci_percentile=ci_p, ci_normal=ci_n, b=b, n_failed=n_failed
    )


@dataclass(frozen=True)
class WaldResult:
    statistic: float
    dof: int
    pvalue: float
    periods: tuple[int, ...]


def pretest_wald(series: AttSeries) -> WaldResult:
    """Joint test that all pre-treatment effects are zero.

    Uses the stored joint covariance of the scaled estimates; singular
    covariances fall back to the pseudo-inverse with dof equal to the
    rank.

    Raises
    ------
    NoPrePeriods
        If the design has no pre-treatment periods (first treatment at
        period 3) or no joint covariance is stored.
    """
    if not series.pre_periods:
        raise NoPrePeriods("no pre-treatment periods in [3, t*); nothing to test")
    if series.joint_cov is None:
        raise NoPrePeriods("series carries no joint covariance; use bootstrap output")
    all_periods = sorted(series.att)
    sel = [all_periods.index(t) for t in series.pre_periods]
    a = np.array([series.att[t] for t in series.pre_periods])
    c = series.joint_cov[np.ix_(sel, sel)]
    c_inv, rank = psd_inverse(c)
    stat = float(series.n * a @ c_inv @ a)
    stat = max(stat, 0.0)
    pval = float(stats.chi2.sf(stat, rank)) if rank > 0 else 1.0
    return WaldResult(statistic=stat, dof=rank, pvalue=pval, periods=series.pre_periods)


@dataclass(frozen=True)
class OveridReport:
    j_stat: float
    dof: int
    pvalue: float
    label: str


def overid_report(fit: GmmFit) -> OveridReport:
    """J statistic with its chi-square p-value; dof 0 means nothing to test."""
    label = "exactly identified" if fit.j_dof == 0 else "overidentified"
    return OveridReport(
        j_stat=fit.j_stat,
        dof=fit.j_dof,
        pvalue=j_pvalue(fit.j_stat, fit.j_dof),
        label=label,
    )
