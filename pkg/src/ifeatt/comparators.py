"""Difference-in-differences and unit-linear-trend comparators.

Both are misspecified when the common trend path F_t is neither flat
(F_t = 1) nor linear (F_t = t-1); their asymptotic biases are
(F_t - 1) and (F_t - 2) times the treated-untreated gap in the mean
loading, which the bias oracles below evaluate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BadPeriod
from .panel import PanelDataset

__all__ = [
    "BiasOracleInputs",
    "did_att",
    "lt_att",
    "did_bias_oracle",
    "lt_bias_oracle",
]


@dataclass(frozen=True)
class BiasOracleInputs:
    """Trend value and loading gap E[lambda|D=1] - E[lambda|D=0]."""

    f_t: float
    lambda_gap: float


def did_att(data: PanelDataset, t: int) -> float:
    """Difference-in-differences effect for period t, baseline period 2.

    Period 2 is the last period at which the model normalizations pin
    the untreated paths together, so the change is taken against it:
    (Ybar_t - Ybar_2 | D=1) - (Ybar_t - Ybar_2 | D=0).
    """
    if not 3 <= t <= data.t_total:
        raise BadPeriod(f"t must lie in [3, {data.t_total}], got {t}")
    d1 = data.d == 1.0
    change = data.y[:, t - 1] - data.y[:, 1]
    return float(change[d1].mean() - change[~d1].mean())


def lt_att(data: PanelDataset, t: int) -> float:
    """Unit-linear-trends effect: group difference of second differences.

    The second difference Y_t - 2 Y_(t-1) + Y_(t-2) over consecutive
    periods removes unit intercepts and unit-specific linear trends.
    """
    if not 3 <= t <= data.t_total:
        raise BadPeriod(f"t must lie in [3, {data.t_total}], got {t}")
    d1 = data.d == 1.0
    dd = data.y[:, t - 1] - 2.0 * data.y[:, t - 2] + data.y[:, t - 3]
    return float(dd[d1].mean() - dd[~d1].mean())


def did_bias_oracle(inp: BiasOracleInputs) -> float:
    """Asymptotic DID bias (F_t - 1) * loading gap."""
    return (inp.f_t - 1.0) * inp.lambda_gap


def lt_bias_oracle(inp: BiasOracleInputs) -> float:
    """Asymptotic linear-trends bias (F_t - 2) * loading gap."""
    return (inp.f_t - 2.0) * inp.lambda_gap
