import numpy as np
import pytest

from _dgp import BENCH_SPEC, make_bench, make_t5
from ifeatt import inference
from ifeatt.errors import EstimationError, NoPrePeriods, TooManyFailures
from ifeatt.inference import (
    bootstrap_att,
    overid_report,
    point_estimates,
    pretest_wald,
)
from ifeatt.panel import AttSeries, att_series, estimate_gamma1


def test_unknown_estimator_rejected():
    data = make_bench(n=200)
    with pytest.raises(KeyError):
        point_estimates(data, BENCH_SPEC, "nope")


def test_point_estimates_match_direct_calls():
    data = make_bench(n=500)
    fit, params = estimate_gamma1(data, BENCH_SPEC)
    series = att_series(params, fit, data)
    assert point_estimates(data, BENCH_SPEC, "ife-panel") == dict(series.att)


def test_bootstrap_needs_enough_replications():
    data = make_bench(n=200)
    with pytest.raises(ValueError):
        bootstrap_att(data, BENCH_SPEC, b=99)


def test_bootstrap_deterministic_and_sane():
    data = make_bench(n=300)
    a = bootstrap_att(data, BENCH_SPEC, b=120, seed=5)
    b = bootstrap_att(data, BENCH_SPEC, b=120, seed=5)
    assert a.point == b.point
    assert a.se == b.se
    assert a.ci_percentile == b.ci_percentile
    assert a.n_failed == 0
    lo, hi = a.ci_percentile[3]
    assert lo < a.point[3] < hi
    lo, hi = a.ci_normal[3]
    assert lo < a.point[3] < hi
    c = bootstrap_att(data, BENCH_SPEC, b=120, seed=6)
    assert c.se != a.se


def test_bootstrap_se_tracks_analytic_for_simple_means():
    # the two-group mean difference has a textbook standard error, so
    # the bootstrap of the trend comparator should land near it
    data = make_bench(n=800)
    res = bootstrap_att(data, estimator="did", b=300, seed=2)
    diff = data.y[:, 2] - data.y[:, 1]
    d1 = data.d == 1.0
    target = np.sqrt(
        diff[d1].var(ddof=1) / d1.sum() + diff[~d1].var(ddof=1) / (~d1).sum()
    )
    assert res.se[3] == pytest.approx(float(target), rel=0.3)


def test_bootstrap_aborts_on_failures(monkeypatch):
    calls = {"n": 0}

    def flaky(data, spec):
        calls["n"] += 1
        if calls["n"] > 1:
            raise EstimationError("boom")
        return {3: 0.0}

    monkeypatch.setitem(inference.ESTIMATORS, "flaky", flaky)
    data = make_bench(n=100)
    with pytest.raises(TooManyFailures):
        bootstrap_att(data, estimator="flaky", b=100, seed=0)


def test_pretest_needs_pre_periods():
    data = make_bench(n=400)
    fit, params = estimate_gamma1(data, BENCH_SPEC)
    series = att_series(params, fit, data)
    assert series.pre_periods == ()
    with pytest.raises(NoPrePeriods):
        pretest_wald(series)


def test_pretest_needs_joint_covariance():
    series = AttSeries(
        att={3: 0.1, 4: -0.2, 5: 0.9},
        variance=None,
        joint_cov=None,
        pre_periods=(3, 4),
        post_periods=(5,),
        n=100,
    )
    with pytest.raises(NoPrePeriods):
        pretest_wald(series)


def test_pretest_on_multi_period_design():
    data = make_t5(n=2000, rep=0)
    fit, params = estimate_gamma1(data, BENCH_SPEC)
    series = att_series(params, fit, data)
    res = pretest_wald(series)
    assert res.periods == (3, 4)
    assert res.dof == 2
    assert res.statistic >= 0.0
    assert 0.0 <= res.pvalue <= 1.0


def test_pretest_singular_covariance_drops_dof():
    cov = np.array([[1.0, 1.0, 0.0], [1.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    series = AttSeries(
        att={3: 0.05, 4: 0.05, 5: 1.0},
        variance={3: 1.0, 4: 1.0, 5: 1.0},
        joint_cov=cov,
        pre_periods=(3, 4),
        post_periods=(5,),
        n=400,
    )
    res = pretest_wald(series)
    assert res.dof == 1
    assert res.statistic >= 0.0


def test_overid_report_labels():
    bench = make_bench(n=400)
    fit, _ = estimate_gamma1(bench, BENCH_SPEC)
    rep = overid_report(fit)
    assert rep.label == "exactly identified"
    assert rep.dof == 0
    assert rep.pvalue == 1.0

    t5 = make_t5(n=2000, rep=1)
    fit5, _ = estimate_gamma1(t5, BENCH_SPEC)
    rep5 = overid_report(fit5)
    assert rep5.label == "overidentified"
    assert rep5.dof == 4
    assert 0.0 <= rep5.pvalue <= 1.0
    assert rep5.j_stat >= 0.0
