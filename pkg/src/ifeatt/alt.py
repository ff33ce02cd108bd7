"""Alternative identification routes.

Two per-period estimators that replace the excluded time-invariant
covariate of the main approach:

* serially uncorrelated errors: with U_t uncorrelated across periods,
  outcomes from other periods (3..T excluding t) are valid instruments
  for the short difference, so (delta_t, F_t) solve a per-period
  linear moment system on the untreated subsample, plus extra
  pre-treatment moments from the treated group when t* > 3;

* time-varying covariates under strict exogeneity: with X_it strictly
  exogenous and a common coefficient beta, the full covariate history
  (1, X_1', ..., X_T') instruments the regressors
  (1, (X_t-X_1)', Y_2-Y_1, (X_2-X_1)').

Neither cares about the x/w covariate partition of the main model.
No analytic variance is produced for either; use the unit bootstrap.

On sign conventions for the second estimator: the population
coefficient on the (X_2-X_1) regressor is -beta F_t.  The nuisance is
reported here as zeta_t = +beta F_t (the raw coefficient negated) so
that the zeta_t = beta F_t consistency diagnostic holds, and the
effect formula correspondingly adds E[(X_2-X_1)'|D=1] zeta_t.  The
period effect theta_t is subtracted as well; with a nonzero planted
theta_t the formula fails without it, which a test pins.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BadPeriod,
    DimensionMismatch,
    NeedsFourPeriods,
    NonFiniteInput,
    SpecMismatch,
)
from .gmm import crossprod_mean, solve_linear_gmm
from .panel import AttSeries, PanelDataset

__all__ = [
    "TvPanelDataset",
    "AltFitT3",
    "AltFitT4",
    "estimate_serial_uncorr",
    "fit_serial_uncorr",
    "att_serial_uncorr",
    "estimate_timevarying",
    "fit_timevarying",
    "att_timevarying",
]


@dataclass(frozen=True)
class TvPanelDataset:
    """Balanced panel with time-varying covariates.

    ``x`` has shape (n, t_total, k_x); covariates may move every
    period.  No intercept column: the constant is added internally.
    """

    y: np.ndarray
    x: np.ndarray
    d: np.ndarray
    t_star: int

    def __post_init__(self):
        y = np.asarray(self.y, dtype=np.float64)
        x = np.asarray(self.x, dtype=np.float64)
        d = np.asarray(self.d)
        if y.ndim != 2 or x.ndim != 3 or d.ndim != 1:
            raise DimensionMismatch(
                f"expected y (n,T), x (n,T,Kx), d (n,); got {y.shape}, {x.shape}, {d.shape}"
            )
        n, t_total = y.shape
        if x.shape[0] != n or x.shape[1] != t_total or d.shape[0] != n:
            raise DimensionMismatch("y, x, d shapes disagree")
        if t_total < 3:
            raise SpecMismatch(f"need at least 3 periods, got {t_total}")
        if not 3 <= self.t_star <= t_total:
            raise BadPeriod(f"t_star must lie in [3, {t_total}], got {self.t_star}")
        if not (np.isfinite(y).all() and np.isfinite(x).all()):
            raise NonFiniteInput("panel contains NaN or Inf")
        if set(np.unique(d)) - {0, 1}:
            raise SpecMismatch("d must be binary 0/1")
        d = d.astype(np.float64)
        if d.sum() == 0 or d.sum() == n:
            raise SpecMismatch("need both treated and untreated units")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "d", d)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def t_total(self) -> int:
        return self.y.shape[1]

    @property
    def k_x(self) -> int:
        return self.x.shape[2]


@dataclass(frozen=True)
class AltFitT3:
    """Per-period fits of the other-period-instrument estimator.

    ``instruments[t]`` records which columns identified period t:
    outcome periods first, then the covariate columns.
    """

    delta: dict[int, np.ndarray]
    f: dict[int, float]
    instruments: dict[int, tuple[str, ...]]


@dataclass(frozen=True)
class AltFitT4:
    """Per-period fits of the covariate-history estimator.

    ``zeta[t]`` is reported on the beta*F_t scale; ``zeta_gap`` is the
    consistency diagnostic zeta_t - beta_t F_t, which should shrink
    toward zero with the sample size when the model is correct.
    """

    theta: dict[int, float]
    beta: dict[int, np.ndarray]
    f: dict[int, float]
    zeta: dict[int, np.ndarray]

    def zeta_gap(self, t: int) -> np.ndarray:
        return self.zeta[t] - self.beta[t] * self.f[t]


def estimate_serial_uncorr(
    data: PanelDataset, t: int, w: np.ndarray | None = None
) -> tuple[np.ndarray, float]:
    """Fit (delta_t, F_t) using other-period outcomes as instruments.

    Untreated moments use instruments (Y_s for s in 3..T, s != t, then
    all covariate columns); for pre-treatment periods t < t* the
    treated group adds moments with instruments restricted to its own
    pre-treatment outcomes (s in 3..t*-1, s != t) and covariates.

    Raises
    ------
    NeedsFourPeriods
        With t_total < 4 the untreated instrument count falls below
        the parameter count.
    RankDeficient
        When the instrument-regressor cross product loses rank
        (other-period outcomes do not move the short difference).
    """
    t_total = data.t_total
    if t_total < 4:
        raise NeedsFourPeriods(
            f"other-period instruments need t_total >= 4, got {t_total}"
        )
    if not 3 <= t <= t_total:
        raise BadPeriod(f"t must lie in [3, {t_total}], got {t}")

    dy2 = data.y[:, 1] - data.y[:, 0]
    dyt = data.y[:, t - 1] - data.y[:, 0]
    reg = np.column_stack([data.z, dy2])

    d0 = data.d == 0.0
    s0 = [s for s in range(3, t_total + 1) if s != t]
    inst0 = np.column_stack([data.y[d0][:, [s - 1 for s in s0]], data.z[d0]])
    m2 = crossprod_mean(inst0, reg[d0])
    my = crossprod_mean(inst0, dyt[d0, None])[:, 0]

    if t < data.t_star:
        d1 = ~d0
        s1 = [s for s in range(3, data.t_star) if s != t]
        inst1 = np.column_stack([data.y[d1][:, [s - 1 for s in s1]], data.z[d1]])
        m2 = np.vstack([m2, crossprod_mean(inst1, reg[d1])])
        my = np.concatenate([my, crossprod_mean(inst1, dyt[d1, None])[:, 0]])

    if w is None:
        w = np.eye(m2.shape[0])
    sol = solve_linear_gmm(m2, my, w)
    return sol[:-1], float(sol[-1])


def fit_serial_uncorr(data: PanelDataset, w: np.ndarray | None = None) -> AltFitT3:
    """Run :func:`estimate_serial_uncorr` for every period 3..T."""
    delta: dict[int, np.ndarray] = {}
    f: dict[int, float] = {}
    instruments: dict[int, tuple[str, ...]] = {}
    for t in range(3, data.t_total + 1):
        delta[t], f[t] = estimate_serial_uncorr(data, t, w)
        names = [f"y{s}" for s in range(3, data.t_total + 1) if s != t]
        names += [f"z{j}" for j in range(data.k)]
        instruments[t] = tuple(names)
    return AltFitT3(delta=delta, f=f, instruments=instruments)


def att_serial_uncorr(data: PanelDataset, fits: AltFitT3) -> AttSeries:
    """Effects from the per-period fits: treated path minus predicted path.

    Pre-treatment periods t < t* are reported as pre-tests.
    """
    d1 = data.d == 1.0
    zbar = data.z[d1].mean(axis=0)
    dy2 = float((data.y[d1, 1] - data.y[d1, 0]).mean())
    att: dict[int, float] = {}
    for t in sorted(fits.f):
        dyt = float((data.y[d1, t - 1] - data.y[d1, 0]).mean())
        att[t] = dyt - float(zbar @ fits.delta[t]) - fits.f[t] * dy2
    periods = tuple(sorted(att))
    return AttSeries(
        att=att,
        variance=None,
        joint_cov=None,
        pre_periods=tuple(t for t in periods if t < data.t_star),
        post_periods=tuple(t for t in periods if t >= data.t_star),
        n=data.n,
    )


def estimate_timevarying(
    data: TvPanelDataset, t: int, w: np.ndarray | None = None
) -> tuple[float, np.ndarray, float, np.ndarray]:
    """Fit (theta_t, beta, F_t, zeta_t) from the covariate history.

    Instruments are (1, X_1', ..., X_T') on the untreated subsample;
    regressors are (1, (X_t-X_1)', Y_2-Y_1, (X_2-X_1)').  The raw
    coefficient on the last block converges to -beta F_t; it is negated
    before being returned so that zeta_t sits on the beta F_t scale.
    """
    t_total, k_x = data.t_total, data.k_x
    if not 3 <= t <= t_total:
        raise BadPeriod(f"t must lie in [3, {t_total}], got {t}")

    d0 = data.d == 0.0
    n0 = int(d0.sum())
    inst = np.column_stack([np.ones(n0), data.x[d0].reshape(n0, t_total * k_x)])
    dxt = data.x[d0, t - 1, :] - data.x[d0, 0, :]
    dx2 = data.x[d0, 1, :] - data.x[d0, 0, :]
    dy2 = data.y[d0, 1] - data.y[d0, 0]
    dyt = data.y[d0, t - 1] - data.y[d0, 0]
    reg = np.column_stack([np.ones(n0), dxt, dy2, dx2])

    mx = crossprod_mean(inst, reg)
    my = crossprod_mean(inst, dyt[:, None])[:, 0]
    if w is None:
        w = np.eye(mx.shape[0])
    sol = solve_linear_gmm(mx, my, w)
    theta = float(sol[0])
    beta = sol[1 : 1 + k_x]
    f_t = float(sol[1 + k_x])
    zeta = -sol[2 + k_x :]
    return theta, beta, f_t, zeta


def fit_timevarying(data: TvPanelDataset, w: np.ndarray | None = None) -> AltFitT4:
    """Run :func:`estimate_timevarying` for every period 3..T."""
    theta: dict[int, float] = {}
    beta: dict[int, np.ndarray] = {}
    f: dict[int, float] = {}
    zeta: dict[int, np.ndarray] = {}
    for t in range(3, data.t_total + 1):
        theta[t], beta[t], f[t], zeta[t] = estimate_timevarying(data, t, w)
    return AltFitT4(theta=theta, beta=beta, f=f, zeta=zeta)


def att_timevarying(data: TvPanelDataset, fits: AltFitT4) -> AttSeries:
    """Effects from the covariate-history fits.

    att_t = E[Y_t - Y_1 | D=1] - theta_t - E[(X_t-X_1)'|D=1] beta
            - F_t E[Y_2 - Y_1 | D=1] + E[(X_2-X_1)'|D=1] zeta_t.
    """
    d1 = data.d == 1.0
    dy2 = float((data.y[d1, 1] - data.y[d1, 0]).mean())
    dx2 = (data.x[d1, 1, :] - data.x[d1, 0, :]).mean(axis=0)
    att: dict[int, float] = {}
    for t in sorted(fits.f):
        dyt = float((data.y[d1, t - 1] - data.y[d1, 0]).mean())
        dxt = (data.x[d1, t - 1, :] - data.x[d1, 0, :]).mean(axis=0)
        att[t] = (
            dyt
            - fits.theta[t]
            - float(dxt @ fits.beta[t])
            - fits.f[t] * dy2
            + float(dx2 @ fits.zeta[t])
        )
    periods = tuple(sorted(att))
    return AttSeries(
        att=att,
        variance=None,
        joint_cov=None,
        pre_periods=tuple(t for t in periods if t < data.t_star),
        post_periods=tuple(t for t in periods if t >= data.t_star),
        n=data.n,
    )
