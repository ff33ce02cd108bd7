import numpy as np
import pytest
from numpy.testing import assert_allclose

from _dgp import T3_TRUTH, T4_TRUTH, make_bench, make_t3_design, make_t4_design
from ifeatt.alt import (
    TvPanelDataset,
    att_serial_uncorr,
    att_timevarying,
    estimate_serial_uncorr,
    fit_serial_uncorr,
    fit_timevarying,
)
from ifeatt.errors import (
    BadPeriod,
    DimensionMismatch,
    NeedsFourPeriods,
    SpecMismatch,
)


def test_other_period_instruments_need_four_periods():
    data = make_bench(n=200, rep=0)
    with pytest.raises(NeedsFourPeriods):
        estimate_serial_uncorr(data, 3)


def test_serial_uncorr_recovers_design():
    data = make_t3_design(n=40000, rep=0)
    fits = fit_serial_uncorr(data)
    assert fits.f[3] == pytest.approx(T3_TRUTH["f"][3], abs=0.1)
    assert fits.f[4] == pytest.approx(T3_TRUTH["f"][4], abs=0.15)
    # the exclusion covariate's differenced coefficient is zero when its
    # effect is constant over time
    assert fits.delta[3][1] == pytest.approx(0.0, abs=0.1)
    series = att_serial_uncorr(data, fits)
    assert series.post_periods == (3, 4)
    assert series.att[3] == pytest.approx(1.0, abs=0.15)
    assert series.att[4] == pytest.approx(1.0, abs=0.2)
    assert series.variance is None


def test_serial_uncorr_instrument_labels():
    data = make_t3_design(n=300, rep=1)
    fits = fit_serial_uncorr(data)
    assert fits.instruments[3] == ("y4", "z0", "z1")
    assert fits.instruments[4] == ("y3", "z0", "z1")


def test_serial_uncorr_moments_hold_at_solution():
    data = make_t3_design(n=500, rep=2)
    delta, f = estimate_serial_uncorr(data, 3)
    d0 = data.d == 0.0
    dy2 = data.y[:, 1] - data.y[:, 0]
    resid = (data.y[:, 2] - data.y[:, 0]) - data.z @ delta - f * dy2
    inst = np.column_stack([data.y[d0][:, [3]], data.z[d0]])
    assert_allclose(inst.T @ resid[d0] / data.n, 0.0, atol=1e-10)


def test_tv_dataset_validation():
    rng = np.random.default_rng(1)
    y = rng.standard_normal((10, 3))
    x = rng.standard_normal((10, 3, 1))
    d = np.array([1.0] * 5 + [0.0] * 5)
    TvPanelDataset(y=y, x=x, d=d, t_star=3)
    with pytest.raises(DimensionMismatch):
        TvPanelDataset(y=y, x=x[:, :2], d=d, t_star=3)
    with pytest.raises(SpecMismatch):
        TvPanelDataset(y=y[:, :2], x=x[:, :2], d=d, t_star=3)
    with pytest.raises(BadPeriod):
        TvPanelDataset(y=y, x=x, d=d, t_star=4)


def test_timevarying_recovers_design():
    data = make_t4_design(n=40000, rep=0)
    fits = fit_timevarying(data)
    assert fits.f[3] == pytest.approx(T4_TRUTH["f3"], abs=0.1)
    assert fits.beta[3][0] == pytest.approx(T4_TRUTH["beta"], abs=0.05)
    assert fits.theta[3] == pytest.approx(2.0, abs=0.15)
    assert_allclose(fits.zeta_gap(3), 0.0, atol=0.2)
    series = att_timevarying(data, fits)
    assert series.att[3] == pytest.approx(T4_TRUTH["att"], abs=0.15)
    assert series.variance is None


def test_timevarying_zeta_sits_on_product_scale():
    data = make_t4_design(n=60000, rep=1)
    fits = fit_timevarying(data)
    assert fits.zeta[3][0] == pytest.approx(
        T4_TRUTH["beta"] * T4_TRUTH["f3"], abs=0.25
    )


def test_alt_estimators_deterministic():
    data = make_t3_design(n=400, rep=3)
    a = fit_serial_uncorr(data)
    b = fit_serial_uncorr(data)
    assert a.f == b.f
    tv = make_t4_design(n=400, rep=3)
    fa = fit_timevarying(tv)
    fb = fit_timevarying(tv)
    assert fa.f == fb.f and fa.theta == fb.theta
