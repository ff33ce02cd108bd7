"""Repeated-cross-sections estimator.

Each sampled unit is observed in exactly one period, so period-level
expectations are recovered from the pooled mixture distribution by
indicator weighting: E[Y_t] = E_M[1{T=t} Y / pi_t] with pi_t the
period sampling share.  Time-invariant covariates need no weighting,
E[X] = E_M[X].  Substituting those two rules into the panel moment
system gives the construction here: outcome entries become
1{T=t} Y / pi_t - 1{T=1} Y / pi_1 and the short-difference regressor
becomes 1{T=2} Y / pi_2 - 1{T=1} Y / pi_1, while covariate entries and
instruments enter every row unweighted.

Exploding a balanced panel into one row per (unit, period) with equal
shares reproduces the panel moment matrices exactly; a test pins that.
Standard errors for genuine repeated cross sections should come from
the row bootstrap (pi_hat randomness is not accounted for by the
plug-in), so the returned series carries no analytic variance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    BadPeriod,
    DegeneratePi,
    DimensionMismatch,
    EmptyCell,
    EmptyPeriod,
    NonFiniteInput,
    SpecMismatch,
)
from .gmm import MomentSystem, crossprod_mean, two_step_fit
from .panel import AttSeries, Dims, GammaParams, ModelSpec, PanelDataset

__all__ = [
    "RcDataset",
    "PiShares",
    "estimate_pi",
    "build_rc_unit",
    "fit_rc",
    "estimate_att_rc",
    "explode_panel",
]


@dataclass(frozen=True)
class RcDataset:
    """Pooled repeated-cross-sections rows.

    Each row holds one unit observed in one period: outcome ``y``,
    time-invariant covariates ``z`` (leading intercept), treated-group
    indicator ``d``, and 1-indexed period label ``t``.
    """

    y: np.ndarray
    z: np.ndarray
    d: np.ndarray
    t: np.ndarray
    t_star: int

    def __post_init__(self):
        y = np.asarray(self.y, dtype=np.float64)
        z = np.asarray(self.z, dtype=np.float64)
        d = np.asarray(self.d)
        t = np.asarray(self.t)
        if y.ndim != 1 or z.ndim != 2 or d.ndim != 1 or t.ndim != 1:
            raise DimensionMismatch("expected y (n,), z (n,K), d (n,), t (n,)")
        n = y.shape[0]
        if z.shape[0] != n or d.shape[0] != n or t.shape[0] != n:
            raise DimensionMismatch("row counts differ across y, z, d, t")
        if not (np.isfinite(y).all() and np.isfinite(z).all()):
            raise NonFiniteInput("rows contain NaN or Inf")
        if not np.all(t == t.astype(np.int64)):
            raise BadPeriod("period labels must be integers")
        t = t.astype(np.int64)
        t_total = int(t.max()) if n else 0
        if t.min() < 1:
            raise BadPeriod("period labels must start at 1")
        counts = np.bincount(t, minlength=t_total + 1)[1:]
        if (counts == 0).any():
            missing = [int(s + 1) for s in np.where(counts == 0)[0]]
            raise EmptyPeriod(f"no rows for period(s) {missing}")
        if t_total < 3:
            raise SpecMismatch(f"need at least 3 periods, got {t_total}")
        if not 3 <= self.t_star <= t_total:
            raise BadPeriod(f"t_star must lie in [3, {t_total}], got {self.t_star}")
        if set(np.unique(d)) - {0, 1}:
            raise SpecMismatch("d must be binary 0/1")
        d = d.astype(np.float64)
        if d.sum() == 0 or d.sum() == n:
            raise SpecMismatch("need both treated and untreated rows")
        if not np.all(z[:, 0] == 1.0):
            raise SpecMismatch("z must carry an all-ones intercept in column 0")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "t", t)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def t_total(self) -> int:
        return int(self.t.max())

    @property
    def k(self) -> int:
        return self.z.shape[1]


@dataclass(frozen=True)
class PiShares:
    """Period sampling shares; positive and summing to one."""

    pi: np.ndarray

    def __post_init__(self):
        pi = np.asarray(self.pi, dtype=np.float64)
        if (pi <= 0).any():
            raise EmptyPeriod("all period shares must be positive")
        if abs(float(pi.sum()) - 1.0) > 1e-10:
            raise DimensionMismatch(f"shares sum to {pi.sum()}, expected 1")
        object.__setattr__(self, "pi", pi)


def estimate_pi(data: RcDataset) -> PiShares:
    """Plug-in shares pi_hat_t = n_t / n."""
    counts = np.bincount(data.t, minlength=data.t_total + 1)[1:]
    return PiShares(pi=counts / data.n)


def build_rc_unit(
    row: tuple[float, np.ndarray, float, int],
    pi: PiShares,
    spec: ModelSpec,
    t_star: int,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Stack one row's contribution (reference construction).

    ``row`` is (y, z_row, d, t).  Returns (y_rc, z_i, x_rc) shaped like
    the panel builder's output; averaging over rows reproduces the
    mixture expectations.  The estimation path is vectorized; a test
    asserts the two routes agree.
    """
    y, z_row, d_i, t_row = row
    z_row = np.asarray(z_row, dtype=np.float64)
    t_total = pi.pi.shape[0]
    k = z_row.shape[0]
    dims = Dims(t_total=t_total, t_star=t_star, k=k, k_x=spec.k_x)
    n_pre = t_star - 3

    ind = np.zeros(t_total)
    ind[t_row - 1] = 1.0
    s = ind / pi.pi
    ydiff = y * (s[2:] - s[0])
    dy2 = y * (s[1] - s[0])
    x_row = z_row[list(spec.x_cols)]

    y_rc = np.concatenate([ydiff, ydiff[:n_pre], d_i * x_row, d_i * y * s, [d_i]])

    z_i = np.zeros((dims.m1, dims.q1))
    for j in range(t_total - 2):
        z_i[j * k : (j + 1) * k, j] = (1.0 - d_i) * z_row
    for j in range(n_pre):
        r0 = k * (t_total - 2) + j * k
        z_i[r0 : r0 + k, (t_total - 2) + j] = d_i * z_row
    z_i[dims.m :, dims.q :] = np.eye(dims.n_aux)

    x_rc = np.zeros((dims.q1, dims.l1))
    reg = np.concatenate([x_row, [dy2]])
    w = spec.k_x + 1
    for j in range(t_total - 2):
        x_rc[j, j * w : (j + 1) * w] = reg
    for j in range(n_pre):
        x_rc[(t_total - 2) + j, j * w : (j + 1) * w] = reg
    x_rc[dims.q :, dims.l :] = np.eye(dims.n_aux)

    return y_rc, z_i, x_rc


def _build_rc_moments(data: RcDataset, spec: ModelSpec):
    spec.validate_against(data.k)
    dims = Dims(t_total=data.t_total, t_star=data.t_star, k=data.k, k_x=spec.k_x)
    pi = estimate_pi(data)

    for dv in (0.0, 1.0):
        for s in range(1, data.t_total + 1):
            if not np.any((data.d == dv) & (data.t == s)):
                raise EmptyCell(f"no rows with d={int(dv)} in period {s}")

    d = data.d
    u0 = 1.0 - d
    z = data.z
    x = z[:, list(spec.x_cols)]
    n_pre = data.t_star - 3
    w = dims.k_x + 1

    ind = np.zeros((data.n, data.t_total))
    ind[np.arange(data.n), data.t - 1] = 1.0
    s_mat = ind / pi.pi[None, :]
    ydiff = data.y[:, None] * (s_mat[:, 2:] - s_mat[:, :1])
    dy2 = data.y * (s_mat[:, 1] - s_mat[:, 0])
    yw = data.y[:, None] * s_mat
    reg = np.column_stack([x, dy2])

    z0 = u0[:, None] * z
    z1 = d[:, None] * z

    mzx = np.zeros((dims.m1, dims.l1))
    mzx[: dims.k * (data.t_total - 2), : dims.l] = np.kron(
        np.eye(data.t_total - 2), crossprod_mean(z0, reg)
    )
    if n_pre > 0:
        r0 = dims.k * (data.t_total - 2)
        mzx[r0 : r0 + dims.k * n_pre, : n_pre * w] = np.kron(
            np.eye(n_pre), crossprod_mean(z1, reg)
        )
    mzx[dims.m :, dims.l :] = np.eye(dims.n_aux)

    mzy = np.zeros(dims.m1)
    mzy[: dims.k * (data.t_total - 2)] = crossprod_mean(z0, ydiff).T.ravel()
    if n_pre > 0:
        r0 = dims.k * (data.t_total - 2)
        mzy[r0 : r0 + dims.k * n_pre] = crossprod_mean(z1, ydiff[:, :n_pre]).T.ravel()
    mzy[dims.m : dims.m + dims.k_x] = (d[:, None] * x).mean(axis=0)
    mzy[dims.m + dims.k_x : dims.m + dims.k_x + data.t_total] = (d[:, None] * yw).mean(axis=0)
    mzy[-1] = d.mean()

    def per_row_zu(gamma: np.ndarray) -> np.ndarray:
        params = GammaParams.from_gamma(gamma, dims.t_total, data.t_star, dims.k_x)
        res = ydiff - x @ params.beta.T - np.outer(dy2, params.f)
        g_a = (z0[:, None, :] * res[:, :, None]).reshape(data.n, -1)
        if n_pre > 0:
            g_b = (z1[:, None, :] * res[:, :n_pre, None]).reshape(data.n, -1)
        else:
            g_b = np.zeros((data.n, 0))
        g_c = np.column_stack(
            [
                d[:, None] * x - params.e_dx[None, :],
                d[:, None] * yw - params.e_dy[None, :],
                d - params.p,
            ]
        )
        return np.concatenate([g_a, g_b, g_c], axis=1)

    return mzx, mzy, per_row_zu, dims


def fit_rc(data: RcDataset, spec: ModelSpec):
    """Two-step GMM fit of the mixture-weighted system.

    Returns (GmmFit, GammaParams).  Point estimation treats the
    plug-in period shares as known.
    """
    p_hat = float(data.d.mean())
    if p_hat <= 0.0 or p_hat >= 1.0:
        raise DegeneratePi(f"treated share {p_hat} leaves no comparison group")
    mzx, mzy, per_row_zu, dims = _build_rc_moments(data, spec)
    system = MomentSystem(
        mzx=mzx,
        mzy=mzy,
        per_unit_zu=per_row_zu,
        n=data.n,
        core_moments=dims.m,
        core_params=dims.l,
    )
    fit = two_step_fit(system)
    params = GammaParams.from_gamma(fit.gamma, dims.t_total, data.t_star, dims.k_x)
    return fit, params


def estimate_att_rc(data: RcDataset, spec: ModelSpec) -> AttSeries:
    """Fit the mixture-weighted system and report per-period effects.

    The returned series has no analytic variance; use the row
    bootstrap (plug-in share randomness is part of what it picks up).
    """
    _, params = fit_rc(data, spec)

    periods = params.periods
    p = params.p
    att = {}
    for t in periods:
        j = t - 3
        att[t] = float(
            (params.e_dy[t - 1] - params.e_dy[0]) / p
            - (params.e_dx @ params.beta[j]) / p
            - params.f[j] * (params.e_dy[1] - params.e_dy[0]) / p
        )
    return AttSeries(
        att=att,
        variance=None,
        joint_cov=None,
        pre_periods=tuple(t for t in periods if t < data.t_star),
        post_periods=tuple(t for t in periods if t >= data.t_star),
        n=data.n,
    )


def explode_panel(data: PanelDataset) -> RcDataset:
    """One row per (unit, period); shares come out exactly uniform."""
    n, t_total = data.n, data.t_total
    y = data.y.ravel()
    z = np.repeat(data.z, t_total, axis=0)
    d = np.repeat(data.d, t_total)
    t = np.tile(np.arange(1, t_total + 1), n)
    return RcDataset(y=y, z=z, d=d, t=t, t_star=data.t_star)
