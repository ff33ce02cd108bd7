"""Dense linear GMM engine.

Solves moment systems of the form E[Z(Y - X'gamma)] = 0 from their
sample cross-product averages: the weighted linear solution, the
two-step procedure with optimal re-weighting, the J statistic for
overidentifying restrictions, and delta-method variances.

Everything here is a pure function of its inputs.  All reductions over
the sample dimension happen in the callers through fixed-order einsum
sums, and all solves go through QR or eigendecompositions of small
dense matrices, so repeated calls are bitwise reproducible regardless
of BLAS thread count.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import stats

from .errors import (
    DimensionMismatch,
    NonFiniteInput,
    NonSymmetric,
    OmegaSingular,
    RankDeficient,
)

__all__ = [
    "MomentSystem",
    "GmmFit",
    "solve_linear_gmm",
    "two_step_fit",
    "delta_method",
    "psd_inverse",
    "j_pvalue",
    "crossprod_mean",
]

#: relative eigenvalue cutoff used when inverting moment covariances
OMEGA_RTOL = 1e-10


def crossprod_mean(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Average cross product ``a_i b_i' / n`` with a fixed summation order.

    Parameters
    ----------
    a : ndarray, shape (n, j)
    b : ndarray, shape (n, k)

    Returns
    -------
    ndarray, shape (j, k)

    Notes
    -----
    ``einsum`` without ``optimize`` reduces in index order on a single
    thread, which keeps results bitwise identical across machines with
    different BLAS threading.  The small second dimensions in this
    package make the cost negligible.
    """
    if a.shape[0] != b.shape[0]:
        raise DimensionMismatch(f"sample sizes differ: {a.shape[0]} vs {b.shape[0]}")
    return np.einsum("ij,ik->jk", a, b, optimize=False) / a.shape[0]


@dataclass(frozen=True)
class MomentSystem:
    """Averaged linear moment system E[Z(Y - X'gamma)] = 0.

    Parameters
    ----------
    mzx : ndarray, shape (m1, l1)
        Sample average of the instrument-regressor cross products.
    mzy : ndarray, shape (m1,)
        Sample average of the instrument-outcome products.
    per_unit_zu : callable
        ``per_unit_zu(gamma) -> ndarray (n, m1)`` returning each unit's
        moment contribution Z_i U_i(gamma) evaluated at ``gamma``.  Used
        to form the moment covariance from first-step residuals.
    n : int
        Number of sample units behind the averages.
    core_moments, core_params : int, optional
        Split the system into a leading core block and a trailing
        auxiliary block of plug-in means.  The auxiliary block must be
        exactly identified with identity design and fully separable
        (zero off-diagonal mzx blocks).  Auxiliary moment contributions
        can be linear combinations of each other or of core ones (the
        plug-in means repeat information the core rows already carry),
        which makes the full moment covariance singular at the truth;
        the split lets the fit weight and test the core block alone,
        where no such degeneracy exists.  When omitted the whole system
        is the core block.
    """

    mzx: np.ndarray
    mzy: np.ndarray
    per_unit_zu: Callable[[np.ndarray], np.ndarray]
    n: int
    core_moments: int | None = None
    core_params: int | None = None

    def __post_init__(self):
        mzx = np.asarray(self.mzx, dtype=np.float64)
        mzy = np.asarray(self.mzy, dtype=np.float64)
        if mzx.ndim != 2 or mzy.ndim != 1 or mzx.shape[0] != mzy.shape[0]:
            raise DimensionMismatch(
                f"mzx {mzx.shape} incompatible with mzy {mzy.shape}"
            )
        if mzx.shape[0] < mzx.shape[1]:
            raise DimensionMismatch(
                f"underidentified system: {mzx.shape[0]} moments < {mzx.shape[1]} parameters"
            )
        if not (np.isfinite(mzx).all() and np.isfinite(mzy).all()):
            raise NonFiniteInput("moment averages contain NaN or Inf")
        if self.n < 1:
            raise DimensionMismatch(f"n must be positive, got {self.n}")
        if (self.core_moments is None) != (self.core_params is None):
            raise DimensionMismatch(
                "core_moments and core_params must be given together"
            )
        if self.core_moments is not None:
            mc, lc = self.core_moments, self.core_params
            m1, l1 = mzx.shape
            if not (0 <= lc <= mc <= m1) or m1 - mc != l1 - lc:
                raise DimensionMismatch(
                    f"bad core split ({mc}, {lc}) for system {mzx.shape}"
                )
            n_aux = m1 - mc
            if n_aux:
                if not np.array_equal(mzx[mc:, lc:], np.eye(n_aux)):
                    raise DimensionMismatch(
                        "auxiliary block must have identity design"
                    )
                if np.any(mzx[mc:, :lc]) or np.any(mzx[:mc, lc:]):
                    raise DimensionMismatch(
                        "auxiliary block must not couple to core parameters"
                    )
        object.__setattr__(self, "mzx", mzx)
        object.__setattr__(self, "mzy", mzy)

    @property
    def n_moments(self) -> int:
        return self.mzx.shape[0]

    @property
    def n_params(self) -> int:
        return self.mzx.shape[1]

    @property
    def core_split(self) -> tuple[int, int]:
        """(core moment count, core parameter count); whole system if unset."""
        if self.core_moments is None:
            return self.mzx.shape[0], self.mzx.shape[1]
        return self.core_moments, self.core_params


@dataclass(frozen=True)
class GmmFit:
    """Result of a two-step GMM fit.

    Attributes
    ----------
    gamma : ndarray, shape (l1,)
        Final parameter estimate.
    omega : ndarray, shape (m1, m1)
        Estimated moment covariance E[ZUU'Z'] from first-step residuals.
        May be singular when auxiliary plug-in moments repeat core
        information; nothing below inverts it as a whole.
    sigma : ndarray, shape (l1, l1)
        Asymptotic covariance of sqrt(n)(gamma_hat - gamma) from the
        influence-map sandwich B omega B', where B maps moment noise to
        parameter noise for the weighting actually used.
    j_stat : float
        Overidentification statistic of the core block,
        n * gbar_core' omega_core^-1 gbar_core.
    j_dof : int
        Core degrees of freedom (core moments minus core parameters).
    weighting_used : ndarray
        Weighting matrix of the step that produced ``gamma``.
    """

    gamma: np.ndarray
    omega: np.ndarray
    sigma: np.ndarray
    j_stat: float
    j_dof: int
    weighting_used: np.ndarray


def _check_symmetric(a: np.ndarray, name: str = "matrix") -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise NonSymmetric(f"{name} is not square: {a.shape}")
    scale = max(1.0, float(np.abs(a).max()) if a.size else 1.0)
    if a.size and float(np.abs(a - a.T).max()) > 1e-8 * scale:
        raise NonSymmetric(f"{name} is not symmetric")
    return a


def psd_inverse(a: np.ndarray, rtol: float = OMEGA_RTOL) -> tuple[np.ndarray, int]:
    """Eigendecomposition pseudo-inverse of a symmetric PSD matrix.

    Eigenvalues at or below ``rtol`` times the largest eigenvalue are
    treated as exact zeros.

    Returns
    -------
    (inverse, rank) : (ndarray, int)

    Raises
    ------
    NonSymmetric
        If ``a`` is not symmetric.
    """
    a = _check_symmetric(a, "psd_inverse input")
    if a.size == 0:
        return a.copy(), 0
    vals, vecs = np.linalg.eigh((a + a.T) / 2.0)
    cutoff = rtol * max(float(vals[-1]), 0.0)
    keep = vals > cutoff
    inv_vals = np.where(keep, 1.0 / np.where(keep, vals, 1.0), 0.0)
    pinv = (vecs * inv_vals) @ vecs.T
    return (pinv + pinv.T) / 2.0, int(keep.sum())


def _sqrt_psd(w: np.ndarray) -> np.ndarray:
    """Symmetric square root with negative eigenvalues clipped to zero."""
    vals, vecs = np.linalg.eigh((w + w.T) / 2.0)
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


def solve_linear_gmm(mzx: np.ndarray, mzy: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Minimize (mzy - mzx g)' W (mzy - mzx g) over g.

    Parameters
    ----------
    mzx : ndarray, shape (m1, l1)
    mzy : ndarray, shape (m1,)
    w : ndarray, shape (m1, m1)
        Symmetric positive definite weighting matrix; positive
        semidefinite inputs fall back to their pseudo-inverse geometry.

    Returns
    -------
    ndarray, shape (l1,)

    Raises
    ------
    RankDeficient
        If ``mzx`` has column rank below l1 (relevance failure).
    NonFiniteInput
        On NaN or Inf anywhere in the inputs.

    Notes
    -----
    Solved as a least-squares problem in W^(1/2)-transformed
    coordinates via QR, never by inverting mzx'W mzx.  For exactly
    identified systems with invertible mzx the solution is
    mzx^-1 mzy for every admissible W.
    """
    mzx = np.asarray(mzx, dtype=np.float64)
    mzy = np.asarray(mzy, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if mzx.ndim != 2 or mzy.ndim != 1:
        raise DimensionMismatch(f"bad shapes mzx {mzx.shape}, mzy {mzy.shape}")
    m1, l1 = mzx.shape
    if mzy.shape[0] != m1 or w.shape != (m1, m1):
        raise DimensionMismatch(
            f"shapes disagree: mzx {mzx.shape}, mzy {mzy.shape}, w {w.shape}"
        )
    if not (np.isfinite(mzx).all() and np.isfinite(mzy).all() and np.isfinite(w).all()):
        raise NonFiniteInput("solve_linear_gmm received NaN or Inf")
    _check_symmetric(w, "weighting matrix")

    if np.linalg.matrix_rank(mzx) < l1:
        raise RankDeficient(
            f"instrument-regressor cross product has rank < {l1}; "
            "excluded covariates do not identify the parameters"
        )

    root = _sqrt_psd(w)
    a = root @ mzx
    b = root @ mzy
    gamma, _, rank_a, _ = np.linalg.lstsq(a, b, rcond=None)
    if rank_a < l1:
        raise RankDeficient(
            "weighted system lost column rank; weighting matrix too degenerate"
        )
    return gamma


def two_step_fit(system: MomentSystem, first_step_w: np.ndarray | None = None) -> GmmFit:
    """Two-step GMM fit of a linear moment system.

    Step 1 solves with ``first_step_w`` (identity when omitted); when
    the system carries an auxiliary block its parameters are then reset
    to their exact identity-design solution.  The step-1 residual
    contributions feed the moment covariance estimate
    omega = sum_i Z_i U_i U_i' Z_i' / n.  An overidentified core block
    re-solves with w = omega_core^-1; the full omega is never inverted,
    because auxiliary plug-in moments can duplicate core information
    and make it singular at the truth.  The J statistic likewise tests
    the core block only.

    The parameter covariance is the sandwich B omega B' of the
    influence map B: core rows (A' W A)^-1 A' W with A the core design
    and W the core weighting, auxiliary rows the identity.  With a
    nonsingular omega and no auxiliary block this reduces to the
    textbook (A' omega^-1 A)^-1.

    Raises
    ------
    OmegaSingular
        Only when an overidentified core block needs omega_core^-1 and
        the pseudo-inverse rank falls below the core parameter count, or
        the residual covariance is pure rounding noise (noiseless data).
    """
    m1, l1 = system.n_moments, system.n_params
    mc, lc = system.core_split
    n_aux = m1 - mc
    if first_step_w is None:
        first_step_w = np.eye(m1)
    gamma1 = solve_linear_gmm(system.mzx, system.mzy, first_step_w)
    if n_aux:
        gamma1 = gamma1.copy()
        gamma1[lc:] = system.mzy[mc:]

    zu = np.asarray(system.per_unit_zu(gamma1), dtype=np.float64)
    if zu.shape != (system.n, m1):
        raise DimensionMismatch(
            f"per_unit_zu returned {zu.shape}, expected {(system.n, m1)}"
        )
    omega = crossprod_mean(zu, zu)
    omega = (omega + omega.T) / 2.0

    mzx_core = system.mzx[:mc, :lc]
    mzy_core = system.mzy[:mc]
    omega_core = omega[:mc, :mc]
    core_inv, core_rank = psd_inverse(omega_core, rtol=OMEGA_RTOL)
    if mc > lc:
        # a covariance built from pure rounding noise (residuals ~ eps at
        # the step-1 solution) passes the relative rank cutoff yet carries
        # no information; weighting by its inverse would amplify garbage
        scale = max(
            float(np.abs(mzx_core).max()) if mzx_core.size else 0.0,
            float(np.abs(mzy_core).max()),
        )
        if float(np.abs(omega_core).max()) <= (1e-12 * scale) ** 2:
            raise OmegaSingular(
                "moment covariance vanishes at the first-step solution; "
                "residuals are numerically zero"
            )
        if core_rank < lc:
            raise OmegaSingular(
                f"core moment covariance rank {core_rank} < {lc} parameters"
            )
        gamma_core = solve_linear_gmm(mzx_core, mzy_core, core_inv)
        gamma = np.concatenate([gamma_core, system.mzy[mc:]])
        weighting = np.zeros((m1, m1))
        weighting[:mc, :mc] = core_inv
        weighting[mc:, mc:] = np.eye(n_aux)
        w_core = core_inv
    else:
        gamma = gamma1
        weighting = first_step_w
        w_core = np.asarray(first_step_w, dtype=np.float64)[:mc, :mc]

    # influence map: sqrt(n)(gamma_hat - gamma) ~ -B sqrt(n) gbar(gamma)
    awa, _ = psd_inverse(mzx_core.T @ w_core @ mzx_core, rtol=OMEGA_RTOL)
    b_core = awa @ mzx_core.T @ w_core
    sigma = np.zeros((l1, l1))
    sigma[:lc, :lc] = b_core @ omega_core @ b_core.T
    if n_aux:
        cross = b_core @ omega[:mc, mc:]
        sigma[:lc, lc:] = cross
        sigma[lc:, :lc] = cross.T
        sigma[lc:, lc:] = omega[mc:, mc:]
    sigma = (sigma + sigma.T) / 2.0

    gbar_core = mzy_core - mzx_core @ gamma[:lc]
    j_stat = float(system.n * gbar_core @ core_inv @ gbar_core)
    j_stat = max(j_stat, 0.0)

    return GmmFit(
        gamma=gamma,
        omega=omega,
        sigma=sigma,
        j_stat=j_stat,
        j_dof=mc - lc,
        weighting_used=weighting,
    )


def delta_method(grad: np.ndarray, sigma: np.ndarray, n: int) -> float:
    """Asymptotic variance grad' sigma grad of a smooth scalar function.

    The reported standard error of the plug-in estimate is
    ``sqrt(delta_method(grad, sigma, n) / n)``.

    Raises
    ------
    DimensionMismatch
        If ``grad`` and ``sigma`` shapes disagree.
    """
    grad = np.asarray(grad, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    if grad.ndim != 1 or sigma.shape != (grad.shape[0], grad.shape[0]):
        raise DimensionMismatch(
            f"grad {grad.shape} incompatible with sigma {sigma.shape}"
        )
    if n < 1:
        raise DimensionMismatch(f"n must be positive, got {n}")
    if not np.isfinite(grad).all():
        raise NonFiniteInput("gradient contains NaN or Inf")
    return max(float(grad @ sigma @ grad), 0.0)


def j_pvalue(j_stat: float, j_dof: int) -> float:
    """Upper-tail chi-square p-value for the J statistic.

    Exactly identified systems (dof 0) have nothing to test; the
    p-value is defined as 1.
    """
    if j_dof <= 0:
        return 1.0
    return float(stats.chi2.sf(j_stat, j_dof))
