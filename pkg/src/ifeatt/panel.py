"""Panel estimator for treatment effects under an interactive trend.

Untreated outcomes follow  Y_it = Z_i' delta_t + lambda_i F_t + xi_i + U_it
with a scalar unobserved loading lambda_i on a common time path F_t.
Differencing against period 1 and normalizing F_1 = 0, F_2 = 1,
delta_1 = delta_2 = 0 turns the short difference Y_i2 - Y_i1 into a
noisy proxy for lambda_i.  Covariates whose effect on the untreated
outcome is constant over time (the W set) drop out of the differences
and act as instruments for that proxy.

The stacked moment system estimated here carries three blocks per unit:

  A: untreated moments  (1-D) Z (Y_t - Y_1 - X'beta_t - F_t (Y_2-Y_1))
     for every t in 3..T,
  B: the same moments on treated units for pre-treatment periods
     t in 3..t*-1,
  C: identity-instrument moments pinning the auxiliary means E[DX],
     E[DY_t] for t = 1..T, and p = P(D=1).

The average effect on the treated in period t then comes from the
auxiliary block:

  att_t = E[D(Y_t-Y_1)]/p - (E[DX']/p) beta_t - F_t E[D(Y_2-Y_1)]/p.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BadPeriod,
    DegeneratePi,
    DimensionMismatch,
    MissingWCell,
    NonFiniteInput,
    SpecMismatch,
    ZeroDenominator,
)
from .gmm import GmmFit, MomentSystem, crossprod_mean, delta_method, psd_inverse, two_step_fit

__all__ = [
    "F1",
    "F2",
    "PanelDataset",
    "ModelSpec",
    "Dims",
    "GammaParams",
    "AttSeries",
    "RelevanceReport",
    "build_stacked_unit",
    "build_moment_matrices",
    "estimate_gamma1",
    "att_value",
    "att_gradient",
    "att_series",
    "closed_form_example1",
    "closed_form_example2",
    "check_relevance",
]

# normalizations fixed by the differencing strategy
F1: float = 0.0
F2: float = 1.0


@dataclass(frozen=True)
class PanelDataset:
    """Balanced panel in levels.

    Parameters
    ----------
    y : ndarray, shape (n, t_total)
        Outcomes, one column per period 1..t_total.
    z : ndarray, shape (n, k)
        Time-invariant covariates with a leading all-ones intercept
        column.
    d : ndarray, shape (n,)
        Binary treated-group indicator.
    t_star : int
        First treated period (1-indexed); treated units are untreated
        in periods 1..t_star-1.
    """

    y: np.ndarray
    z: np.ndarray
    d: np.ndarray
    t_star: int

    def __post_init__(self):
        y = np.asarray(self.y, dtype=np.float64)
        z = np.asarray(self.z, dtype=np.float64)
        d = np.asarray(self.d)
        if y.ndim != 2 or z.ndim != 2 or d.ndim != 1:
            raise DimensionMismatch(
                f"expected y (n,T), z (n,K), d (n,); got {y.shape}, {z.shape}, {d.shape}"
            )
        n, t_total = y.shape
        if z.shape[0] != n or d.shape[0] != n:
            raise DimensionMismatch("y, z, d row counts differ")
        if t_total < 3:
            raise SpecMismatch(f"need at least 3 periods, got {t_total}")
        if not 3 <= self.t_star <= t_total:
            raise BadPeriod(f"t_star must lie in [3, {t_total}], got {self.t_star}")
        if not (np.isfinite(y).all() and np.isfinite(z).all()):
            raise NonFiniteInput("panel contains NaN or Inf")
        if set(np.unique(d)) - {0, 1}:
            raise SpecMismatch("d must be binary 0/1")
        d = d.astype(np.float64)
        if d.sum() == 0 or d.sum() == n:
            raise SpecMismatch("need at least one treated and one untreated unit")
        if not np.all(z[:, 0] == 1.0):
            raise SpecMismatch("z must carry an all-ones intercept in column 0")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "d", d)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def t_total(self) -> int:
        return self.y.shape[1]

    @property
    def k(self) -> int:
        return self.z.shape[1]


@dataclass(frozen=True)
class ModelSpec:
    """Partition of covariate columns by how their effect moves over time.

    ``x_cols`` lists columns whose coefficients delta_t vary freely by
    period (the intercept here plays the role of the period effect);
    ``w_cols`` lists columns whose effect on untreated outcomes is
    constant over time, which is what lets them instrument the short
    difference.  Together they must partition the columns of z, and
    w_cols must be nonempty (order condition: at least one instrument
    beyond the X set).
    """

    x_cols: tuple[int, ...]
    w_cols: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "x_cols", tuple(int(c) for c in self.x_cols))
        object.__setattr__(self, "w_cols", tuple(int(c) for c in self.w_cols))
        if len(self.w_cols) == 0:
            raise SpecMismatch("w_cols must contain at least one column")
        overlap = set(self.x_cols) & set(self.w_cols)
        if overlap:
            raise SpecMismatch(f"columns in both x_cols and w_cols: {sorted(overlap)}")

    def validate_against(self, k: int) -> None:
        cols = set(self.x_cols) | set(self.w_cols)
        if cols != set(range(k)):
            raise SpecMismatch(
                f"x_cols + w_cols must partition the {k} covariate columns, got {sorted(cols)}"
            )

    @property
    def k_x(self) -> int:
        return len(self.x_cols)


@dataclass(frozen=True)
class Dims:
    """Stacked-system dimensions implied by (T, t*, K, K_X)."""

    t_total: int
    t_star: int
    k: int
    k_x: int

    @property
    def q(self) -> int:
        return (self.t_total - 2) + (self.t_star - 3)

    @property
    def m(self) -> int:
        return self.k * self.q

    @property
    def l(self) -> int:
        return (self.t_total - 2) * (self.k_x + 1)

    @property
    def n_aux(self) -> int:
        return self.k_x + self.t_total + 1

    @property
    def q1(self) -> int:
        return self.q + self.n_aux

    @property
    def m1(self) -> int:
        return self.m + self.n_aux

    @property
    def l1(self) -> int:
        return self.l + self.n_aux


def dims_for(data: PanelDataset, spec: ModelSpec) -> Dims:
    spec.validate_against(data.k)
    return Dims(t_total=data.t_total, t_star=data.t_star, k=data.k, k_x=spec.k_x)


@dataclass(frozen=True)
class GammaParams:
    """Unpacked stacked parameter vector.

    beta holds one row per period t = 3..t_total (K_X entries each,
    the intercept coefficient carrying the period effect), f holds the
    trend path F_t for the same periods, and the auxiliary block holds
    the sample means E[DX], E[DY_t] for t = 1..t_total, and p = P(D=1).
    """

    beta: np.ndarray
    f: np.ndarray
    e_dx: np.ndarray
    e_dy: np.ndarray
    p: float
    t_star: int

    def __post_init__(self):
        if not 0.0 < self.p < 1.0:
            raise DegeneratePi(f"p must lie strictly in (0,1), got {self.p}")

    @property
    def t_total(self) -> int:
        return self.e_dy.shape[0]

    @property
    def k_x(self) -> int:
        return self.e_dx.shape[0]

    @property
    def periods(self) -> tuple[int, ...]:
        return tuple(range(3, self.t_total + 1))

    @classmethod
    def from_gamma(cls, gamma: np.ndarray, t_total: int, t_star: int, k_x: int) -> "GammaParams":
        gamma = np.asarray(gamma, dtype=np.float64)
        nper = t_total - 2
        l = nper * (k_x + 1)
        if gamma.shape[0] != l + k_x + t_total + 1:
            raise DimensionMismatch(
                f"gamma length {gamma.shape[0]} != {l + k_x + t_total + 1}"
            )
        blocks = gamma[:l].reshape(nper, k_x + 1)
        return cls(
            beta=blocks[:, :k_x].copy(),
            f=blocks[:, k_x].copy(),
            e_dx=gamma[l : l + k_x].copy(),
            e_dy=gamma[l + k_x : l + k_x + t_total].copy(),
            p=float(gamma[-1]),
            t_star=t_star,
        )

    def to_gamma(self) -> np.ndarray:
        blocks = np.column_stack([self.beta, self.f])
        return np.concatenate([blocks.ravel(), self.e_dx, self.e_dy, [self.p]])


@dataclass(frozen=True)
class AttSeries:
    """Per-period treated-effect estimates with optional joint covariance.

    ``joint_cov`` is the asymptotic covariance of sqrt(n)(att_hat - att)
    over the reported periods in ascending order; ``variance`` holds its
    diagonal, so the standard error of att[t] is sqrt(variance[t] / n).
    Estimators whose inference route is bootstrap-only leave both None.
    """

    att: dict[int, float]
    variance: dict[int, float] | None
    joint_cov: np.ndarray | None
    pre_periods: tuple[int, ...]
    post_periods: tuple[int, ...]
    n: int

    def se(self, t: int) -> float:
        if self.variance is None:
            raise KeyError("no analytic variance stored; use bootstrap inference")
        return float(np.sqrt(self.variance[t] / self.n))


def build_stacked_unit(
    y_row: np.ndarray,
    z_row: np.ndarray,
    d_i: float,
    spec: ModelSpec,
    t_star: int,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Stack one unit's contribution to the moment system.

    Reference (per-unit) construction: returns (y_i, z_i, x_i) with
    shapes (q1,), (m1, q1), (q1, l1) such that the unit's moment
    contribution is z_i @ (y_i - x_i @ gamma).  The vectorized builder
    in :func:`build_moment_matrices` must average to the same system;
    a test asserts the two routes agree.
    """
    y_row = np.asarray(y_row, dtype=np.float64)
    z_row = np.asarray(z_row, dtype=np.float64)
    t_total = y_row.shape[0]
    k = z_row.shape[0]
    dims = Dims(t_total=t_total, t_star=t_star, k=k, k_x=spec.k_x)

    x_row = z_row[list(spec.x_cols)]
    dy = y_row[2:] - y_row[0]
    dy2 = y_row[1] - y_row[0]
    n_pre = t_star - 3

    y_i = np.concatenate([dy, dy[:n_pre], d_i * x_row, d_i * y_row, [d_i]])

    z_i = np.zeros((dims.m1, dims.q1))
    for j in range(t_total - 2):
        z_i[j * k : (j + 1) * k, j] = (1.0 - d_i) * z_row
    for j in range(n_pre):
        r0 = k * (t_total - 2) + j * k
        z_i[r0 : r0 + k, (t_total - 2) + j] = d_i * z_row
    z_i[dims.m :, dims.q :] = np.eye(dims.n_aux)

    x_i = np.zeros((dims.q1, dims.l1))
    reg = np.concatenate([x_row, [dy2]])
    w = spec.k_x + 1
    for j in range(t_total - 2):
        x_i[j, j * w : (j + 1) * w] = reg
    for j in range(n_pre):
        x_i[(t_total - 2) + j, j * w : (j + 1) * w] = reg
    x_i[dims.q :, dims.l :] = np.eye(dims.n_aux)

    return y_i, z_i, x_i


def build_moment_matrices(data: PanelDataset, spec: ModelSpec):
    """Assemble (mzx, mzy, per_unit_zu, dims) without per-unit loops.

    Exploits the block structure: the untreated rows of mzx are
    I_(T-2) kron b0 with b0 = avg (1-D) Z (X', Y_2-Y_1), the treated
    pre-period rows are I_(t*-3) kron b1 right-padded with zeros, and
    the auxiliary block is the identity.
    """
    dims = dims_for(data, spec)
    d = data.d
    u0 = 1.0 - d
    z = data.z
    y = data.y
    x = z[:, list(spec.x_cols)]
    dy2 = y[:, 1] - y[:, 0]
    dy = y[:, 2:] - y[:, :1]
    reg = np.column_stack([x, dy2])
    n_pre = data.t_star - 3
    w = dims.k_x + 1

    z0 = u0[:, None] * z
    z1 = d[:, None] * z

    b0 = crossprod_mean(z0, reg)
    mzx = np.zeros((dims.m1, dims.l1))
    mzx[: dims.k * (dims.t_total - 2), : dims.l] = np.kron(
        np.eye(dims.t_total - 2), b0
    )
    if n_pre > 0:
        b1 = crossprod_mean(z1, reg)
        r0 = dims.k * (dims.t_total - 2)
        mzx[r0 : r0 + dims.k * n_pre, : n_pre * w] = np.kron(np.eye(n_pre), b1)
    mzx[dims.m :, dims.l :] = np.eye(dims.n_aux)

    zy0 = crossprod_mean(z0, dy)
    mzy = np.zeros(dims.m1)
    mzy[: dims.k * (dims.t_total - 2)] = zy0.T.ravel()
    if n_pre > 0:
        zy1 = crossprod_mean(z1, dy[:, :n_pre])
        r0 = dims.k * (dims.t_total - 2)
        mzy[r0 : r0 + dims.k * n_pre] = zy1.T.ravel()
    mzy[dims.m : dims.m + dims.k_x] = (d[:, None] * x).mean(axis=0)
    mzy[dims.m + dims.k_x : dims.m + dims.k_x + dims.t_total] = (d[:, None] * y).mean(axis=0)
    mzy[-1] = d.mean()

    def per_unit_zu(gamma: np.ndarray) -> np.ndarray:
        params = GammaParams.from_gamma(gamma, dims.t_total, data.t_star, dims.k_x)
        fitted = x @ params.beta.T + np.outer(dy2, params.f)
        res = dy - fitted
        g_a = (z0[:, None, :] * res[:, :, None]).reshape(data.n, -1)
        if n_pre > 0:
            g_b = (z1[:, None, :] * res[:, :n_pre, None]).reshape(data.n, -1)
        else:
            g_b = np.zeros((data.n, 0))
        g_c = np.column_stack(
            [
                d[:, None] * x - params.e_dx[None, :],
                d[:, None] * y - params.e_dy[None, :],
                d - params.p,
            ]
        )
        return np.concatenate([g_a, g_b, g_c], axis=1)

    return mzx, mzy, per_unit_zu, dims


def estimate_gamma1(data: PanelDataset, spec: ModelSpec) -> tuple[GmmFit, GammaParams]:
    """Two-step GMM fit of the stacked system.

    The auxiliary block is exactly identified by identity instruments,
    so in an exactly identified overall system E[DX], E[DY_t], and p
    come out equal to their sample means exactly.

    Raises
    ------
    RankDeficient
        Propagated from the linear solve when the relevance condition
        fails numerically.
    DegeneratePi
        If the treated share is 0 or 1.
    """
    p_hat = float(data.d.mean())
    if p_hat <= 0.0 or p_hat >= 1.0:
        raise DegeneratePi(f"treated share {p_hat} leaves no comparison group")
    mzx, mzy, per_unit_zu, dims = build_moment_matrices(data, spec)
    system = MomentSystem(
        mzx=mzx,
        mzy=mzy,
        per_unit_zu=per_unit_zu,
        n=data.n,
        core_moments=dims.m,
        core_params=dims.l,
    )
    fit = two_step_fit(system)
    params = GammaParams.from_gamma(fit.gamma, dims.t_total, data.t_star, dims.k_x)
    return fit, params


def att_value(params: GammaParams, t: int) -> float:
    """Average effect on the treated in period t implied by the parameters."""
    if not 3 <= t <= params.t_total:
        raise BadPeriod(f"t must lie in [3, {params.t_total}], got {t}")
    j = t - 3
    p = params.p
    dyt = (params.e_dy[t - 1] - params.e_dy[0]) / p
    xb = float(params.e_dx @ params.beta[j]) / p
    short = params.f[j] * (params.e_dy[1] - params.e_dy[0]) / p
    return dyt - xb - short


def att_gradient(params: GammaParams, t: int) -> np.ndarray:
    """Gradient of att_t with respect to the stacked parameter vector.

    Nonzero blocks: the (beta_t, F_t) slots for the own period, the
    auxiliary means, and p.  All other periods' slots are zero.
    """
    if not 3 <= t <= params.t_total:
        raise BadPeriod(f"t must lie in [3, {params.t_total}], got {t}")
    t_total, k_x, p = params.t_total, params.k_x, params.p
    j = t - 3
    w = k_x + 1
    l = (t_total - 2) * w
    grad = np.zeros(l + k_x + t_total + 1)

    grad[j * w : j * w + k_x] = -params.e_dx / p
    grad[j * w + k_x] = -(params.e_dy[1] - params.e_dy[0]) / p
    grad[l : l + k_x] = -params.beta[j] / p
    dy_0 = l + k_x
    grad[dy_0] = -(1.0 - params.f[j]) / p
    grad[dy_0 + 1] = -params.f[j] / p
    grad[dy_0 + t - 1] += 1.0 / p
    grad[-1] = -att_value(params, t) / p
    return grad


def att_series(params: GammaParams, fit: GmmFit, data: PanelDataset) -> AttSeries:
    """Effects for every period 3..T with delta-method variances.

    Pre-treatment periods (t < t*) are reported too; those effects are
    zero under the model and serve as pre-tests.
    """
    periods = params.periods
    grads = np.stack([att_gradient(params, t) for t in periods])
    joint = grads @ fit.sigma @ grads.T
    joint = (joint + joint.T) / 2.0
    att = {t: att_value(params, t) for t in periods}
    variance = {
        t: max(float(joint[i, i]), 0.0) for i, t in enumerate(periods)
    }
    return AttSeries(
        att=att,
        variance=variance,
        joint_cov=joint,
        pre_periods=tuple(t for t in periods if t < params.t_star),
        post_periods=tuple(t for t in periods if t >= params.t_star),
        n=data.n,
    )


def _require_three_periods(data: PanelDataset) -> None:
    if data.t_total != 3 or data.t_star != 3:
        raise SpecMismatch(
            f"closed form needs t_total=3, t_star=3; got {data.t_total}, {data.t_star}"
        )


def closed_form_example1(data: PanelDataset) -> tuple[float, float]:
    """Closed form for the 3-period design with intercept-only covariates.

    The trend step is the ratio of untreated long to short differences,
    F_3 = E[Y_3-Y_1|D=0] / E[Y_2-Y_1|D=0], and the effect subtracts the
    rescaled short difference of the treated:
    att_3 = E[Y_3-Y_1|D=1] - F_3 E[Y_2-Y_1|D=1].

    The sign of the second term is minus: with a plus, the formula
    fails to recover a known planted effect in simulation (see the
    equivalence test against the stacked GMM).
    """
    _require_three_periods(data)
    d0 = data.d == 0.0
    dy2 = data.y[:, 1] - data.y[:, 0]
    dy3 = data.y[:, 2] - data.y[:, 0]
    den = float(dy2[d0].mean())
    num = float(dy3[d0].mean())
    if abs(den) <= 1e-10 * max(1.0, abs(num)):
        raise ZeroDenominator("untreated short difference is zero; trend step undefined")
    f3 = num / den
    att3 = float(dy3[~d0].mean()) - f3 * float(dy2[~d0].mean())
    return f3, att3


def closed_form_example2(data: PanelDataset) -> tuple[float, float, float]:
    """Closed form for the 3-period design with z = (1, W), W binary.

    F_3 is the ratio of across-W-cell gaps of untreated long and short
    differences; theta_3 anchors the W=0 cell; the effect subtracts the
    predicted untreated path from the treated path.
    """
    _require_three_periods(data)
    if data.k != 2:
        raise SpecMismatch(f"closed form needs z = (1, W), got {data.k} columns")
    w = data.z[:, 1]
    vals = np.unique(w)
    if set(vals.tolist()) - {0.0, 1.0}:
        raise SpecMismatch("W must be binary 0/1")
    d0 = data.d == 0.0
    dy2 = data.y[:, 1] - data.y[:, 0]
    dy3 = data.y[:, 2] - data.y[:, 0]
    cells = {}
    for wv in (0.0, 1.0):
        mask = d0 & (w == wv)
        if not mask.any():
            raise MissingWCell(f"no untreated rows with W={int(wv)}")
        cells[wv] = (float(dy2[mask].mean()), float(dy3[mask].mean()))
    den = cells[0.0][0] - cells[1.0][0]
    num = cells[0.0][1] - cells[1.0][1]
    if abs(den) <= 1e-10 * max(1.0, abs(num)):
        raise ZeroDenominator("W cells share the same untreated short difference")
    f3 = num / den
    theta3 = cells[0.0][1] - f3 * cells[0.0][0]
    att3 = float(dy3[~d0].mean()) - (theta3 + f3 * float(dy2[~d0].mean()))
    return f3, theta3, att3


@dataclass(frozen=True)
class RelevanceReport:
    """Diagnostic output of :func:`check_relevance`.

    ``rank`` and ``cond`` describe the sample cross product
    avg (1-D) Z (X', Y_2-Y_1); ``coefficients`` maps each covariate
    column index to its (estimate, robust se) in a first-stage
    regression of the short difference on all covariates among the
    untreated.  ``flagged`` marks a condition number above the
    threshold; this is a warning, never an error.
    """

    rank: int
    needed: int
    cond: float
    coefficients: dict[int, tuple[float, float]]
    flagged: bool
    threshold: float


def check_relevance(
    data: PanelDataset, spec: ModelSpec, cond_threshold: float = 1e8
) -> RelevanceReport:
    """Rank and first-stage diagnostics for the relevance condition."""
    dims = dims_for(data, spec)
    u0 = 1.0 - data.d
    x = data.z[:, list(spec.x_cols)]
    dy2 = data.y[:, 1] - data.y[:, 0]
    reg = np.column_stack([x, dy2])
    b0 = crossprod_mean(u0[:, None] * data.z, reg)

    svals = np.linalg.svd(b0, compute_uv=False)
    tol = max(b0.shape) * np.finfo(np.float64).eps * (svals[0] if svals.size else 0.0)
    rank = int((svals > tol).sum())
    smin = float(svals[-1]) if svals.size else 0.0
    cond = float(svals[0] / smin) if smin > 0 else float("inf")

    mask = data.d == 0.0
    z0 = data.z[mask]
    coef, *_ = np.linalg.lstsq(z0, dy2[mask], rcond=None)
    resid = dy2[mask] - z0 @ coef
    n0 = int(mask.sum())
    coefficients: dict[int, tuple[float, float]] = {}
    if n0 > data.k:
        bread, _ = psd_inverse(z0.T @ z0)
        meat = (z0 * resid[:, None]).T @ (z0 * resid[:, None])
        cov = bread @ meat @ bread
        ses = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    else:
        ses = np.full(data.k, np.nan)
    for j in range(data.k):
        coefficients[j] = (float(coef[j]), float(ses[j]))

    return RelevanceReport(
        rank=rank,
        needed=dims.k_x + 1,
        cond=cond,
        coefficients=coefficients,
        flagged=not np.isfinite(cond) or cond > cond_threshold,
        threshold=cond_threshold,
    )
