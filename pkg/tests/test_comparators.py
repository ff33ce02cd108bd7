import numpy as np
import pytest

from _dgp import make_bench, make_t5
from ifeatt.comparators import (
    BiasOracleInputs,
    did_att,
    did_bias_oracle,
    lt_att,
    lt_bias_oracle,
)
from ifeatt.errors import BadPeriod


def test_did_matches_manual_group_means():
    data = make_bench(n=300, f3=1.5, rho=0.5, rep=0)
    d1 = data.d == 1.0
    change = data.y[:, 2] - data.y[:, 1]
    expected = change[d1].mean() - change[~d1].mean()
    assert did_att(data, 3) == pytest.approx(expected, abs=1e-12)


def test_lt_matches_manual_second_difference():
    data = make_bench(n=300, f3=2.0, rho=0.5, rep=1)
    d1 = data.d == 1.0
    dd = data.y[:, 2] - 2.0 * data.y[:, 1] + data.y[:, 0]
    expected = dd[d1].mean() - dd[~d1].mean()
    assert lt_att(data, 3) == pytest.approx(expected, abs=1e-12)


def test_period_bounds():
    data = make_bench(n=50, rep=2)
    with pytest.raises(BadPeriod):
        did_att(data, 2)
    with pytest.raises(BadPeriod):
        lt_att(data, 4)


def test_bias_oracles_formulas():
    inp = BiasOracleInputs(f_t=1.5, lambda_gap=1.0)
    assert did_bias_oracle(inp) == pytest.approx(0.5)
    assert lt_bias_oracle(inp) == pytest.approx(-0.5)
    assert did_bias_oracle(BiasOracleInputs(f_t=1.0, lambda_gap=2.0)) == 0.0
    assert lt_bias_oracle(BiasOracleInputs(f_t=2.0, lambda_gap=2.0)) == 0.0


@pytest.mark.parametrize("f3", [1.0, 1.5, 2.0])
def test_large_sample_bias_matches_oracles(f3):
    data = make_bench(n=60000, f3=f3, rho=0.5, rep=3)
    gap = 1.0
    tol = 6.0 / np.sqrt(data.n)
    assert did_att(data, 3) - 1.0 == pytest.approx(
        did_bias_oracle(BiasOracleInputs(f_t=f3, lambda_gap=gap)), abs=5 * tol
    )
    assert lt_att(data, 3) - 1.0 == pytest.approx(
        lt_bias_oracle(BiasOracleInputs(f_t=f3, lambda_gap=gap)), abs=5 * tol
    )


def test_multiperiod_lt_uses_consecutive_periods():
    data = make_t5(n=20000, rep=1)
    got = lt_att(data, 5)
    d1 = data.d == 1.0
    dd = data.y[:, 4] - 2.0 * data.y[:, 3] + data.y[:, 2]
    assert got == pytest.approx(dd[d1].mean() - dd[~d1].mean(), abs=1e-12)
