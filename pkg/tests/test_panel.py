import numpy as np
import pytest
from numpy.testing import assert_allclose

from _dgp import BENCH_SPEC, make_bench, make_example1, make_t5, random_panel
from ifeatt.errors import (
    BadPeriod,
    DimensionMismatch,
    NonFiniteInput,
    SpecMismatch,
    ZeroDenominator,
)
from ifeatt.gmm import crossprod_mean
from ifeatt.panel import (
    Dims,
    GammaParams,
    ModelSpec,
    PanelDataset,
    att_gradient,
    att_series,
    att_value,
    build_moment_matrices,
    build_stacked_unit,
    check_relevance,
    closed_form_example1,
    closed_form_example2,
    dims_for,
    estimate_gamma1,
)

EXAMPLE1_SPEC = ModelSpec(x_cols=(), w_cols=(0,))


def _ok_arrays(n=8, t_total=3):
    y = np.arange(n * t_total, dtype=float).reshape(n, t_total)
    z = np.column_stack([np.ones(n), np.linspace(-1, 1, n)])
    d = np.array([1.0] * (n // 2) + [0.0] * (n - n // 2))
    return y, z, d


def test_dataset_validation_errors():
    y, z, d = _ok_arrays()
    PanelDataset(y=y, z=z, d=d, t_star=3)
    with pytest.raises(DimensionMismatch):
        PanelDataset(y=y[:, 0], z=z, d=d, t_star=3)
    with pytest.raises(DimensionMismatch):
        PanelDataset(y=y, z=z[:5], d=d, t_star=3)
    with pytest.raises(SpecMismatch):
        PanelDataset(y=y[:, :2], z=z, d=d, t_star=3)
    with pytest.raises(BadPeriod):
        PanelDataset(y=y, z=z, d=d, t_star=4)
    with pytest.raises(BadPeriod):
        PanelDataset(y=y, z=z, d=d, t_star=2)
    with pytest.raises(NonFiniteInput):
        bad = y.copy()
        bad[0, 0] = np.nan
        PanelDataset(y=bad, z=z, d=d, t_star=3)
    with pytest.raises(SpecMismatch):
        PanelDataset(y=y, z=z, d=d + 1, t_star=3)
    with pytest.raises(SpecMismatch):
        PanelDataset(y=y, z=z, d=np.ones_like(d), t_star=3)
    with pytest.raises(SpecMismatch):
        PanelDataset(y=y, z=z * 2, d=d, t_star=3)


def test_spec_validation():
    with pytest.raises(SpecMismatch):
        ModelSpec(x_cols=(0,), w_cols=())
    with pytest.raises(SpecMismatch):
        ModelSpec(x_cols=(0, 1), w_cols=(1,))
    spec = ModelSpec(x_cols=(0,), w_cols=(1,))
    spec.validate_against(2)
    with pytest.raises(SpecMismatch):
        spec.validate_against(3)


def test_dims_benchmark_and_t5():
    d3 = Dims(t_total=3, t_star=3, k=2, k_x=1)
    assert (d3.q, d3.m, d3.l, d3.n_aux, d3.m1, d3.l1) == (1, 2, 2, 5, 7, 7)
    d5 = Dims(t_total=5, t_star=5, k=2, k_x=1)
    assert (d5.q, d5.m, d5.l, d5.n_aux, d5.m1, d5.l1) == (5, 10, 6, 7, 17, 13)
    data = make_bench(n=50)
    assert dims_for(data, BENCH_SPEC) == d3


def test_gamma_params_round_trip():
    rng = np.random.default_rng(2)
    for t_total, t_star, k_x in [(3, 3, 1), (5, 5, 1), (6, 4, 2)]:
        l1 = (t_total - 2) * (k_x + 1) + k_x + t_total + 1
        gamma = rng.standard_normal(l1)
        gamma[-1] = 0.4
        params = GammaParams.from_gamma(gamma, t_total, t_star, k_x)
        assert_allclose(params.to_gamma(), gamma, atol=0)
        assert params.periods == tuple(range(3, t_total + 1))
    with pytest.raises(DimensionMismatch):
        GammaParams.from_gamma(np.ones(5), 3, 3, 1)


def test_stacked_unit_agrees_with_vectorized_builder():
    rng = np.random.default_rng(7)
    for t_total, t_star, k in [(3, 3, 2), (4, 3, 2), (5, 4, 3), (6, 6, 2)]:
        spec = ModelSpec(x_cols=tuple(range(k - 1)), w_cols=(k - 1,))
        data = random_panel(rng, n=40, t_total=t_total, k=k, t_star=t_star)
        mzx, mzy, per_unit_zu, dims = build_moment_matrices(data, spec)
        zx = np.zeros((dims.m1, dims.l1))
        zy = np.zeros(dims.m1)
        for i in range(data.n):
            y_i, z_i, x_i = build_stacked_unit(
                data.y[i], data.z[i], data.d[i], spec, t_star
            )
            zx += z_i @ x_i
            zy += z_i @ y_i
        assert_allclose(mzx, zx / data.n, atol=1e-12)
        assert_allclose(mzy, zy / data.n, atol=1e-12)
        gamma = rng.standard_normal(dims.l1)
        gamma[-1] = float(rng.uniform(0.2, 0.8))  # treated-share slot must be a probability
        zu_vec = per_unit_zu(gamma)
        for i in range(0, data.n, 7):
            y_i, z_i, x_i = build_stacked_unit(
                data.y[i], data.z[i], data.d[i], spec, t_star
            )
            assert_allclose(zu_vec[i], z_i @ (y_i - x_i @ gamma), atol=1e-11)


def test_estimate_recovers_benchmark_parameters():
    data = make_bench(n=40000, f3=1.5, rho=1.0, rep=1)
    fit, params = estimate_gamma1(data, BENCH_SPEC)
    assert params.f[0] == pytest.approx(1.5, abs=0.05)
    assert params.beta[0, 0] == pytest.approx(2.0, abs=0.08)
    assert params.p == pytest.approx(0.5, abs=0.02)


def test_aux_block_equals_sample_means_exactly():
    data = make_bench(n=600, f3=2.0, rho=0.5, rep=3)
    _, params = estimate_gamma1(data, BENCH_SPEC)
    d = data.d
    assert_allclose(params.e_dx, [np.mean(d * 1.0)], atol=1e-12)
    assert_allclose(params.e_dy, (d[:, None] * data.y).mean(axis=0), atol=1e-12)
    assert params.p == pytest.approx(d.mean(), abs=1e-12)


def test_att_series_benchmark():
    data = make_bench(n=30000, f3=1.0, rho=1.0, rep=2)
    fit, params = estimate_gamma1(data, BENCH_SPEC)
    series = att_series(params, fit, data)
    assert series.pre_periods == ()
    assert series.post_periods == (3,)
    assert series.att[3] == pytest.approx(1.0, abs=0.05)
    assert series.se(3) > 0
    assert series.n == data.n


def test_att_series_reports_pre_periods():
    data = make_t5(n=6000, rep=0)
    fit, params = estimate_gamma1(data, ModelSpec(x_cols=(0,), w_cols=(1,)))
    series = att_series(params, fit, data)
    assert series.pre_periods == (3, 4)
    assert series.post_periods == (5,)
    assert series.att[3] == pytest.approx(0.0, abs=0.2)
    assert series.att[5] == pytest.approx(1.0, abs=0.25)
    assert series.joint_cov.shape == (3, 3)


def test_att_gradient_matches_finite_differences():
    rng = np.random.default_rng(9)
    for _ in range(20):
        t_total = int(rng.integers(3, 6))
        t_star = int(rng.integers(3, t_total + 1))
        k_x = int(rng.integers(1, 3))
        l1 = (t_total - 2) * (k_x + 1) + k_x + t_total + 1
        gamma = rng.standard_normal(l1)
        gamma[-1] = float(rng.uniform(0.2, 0.8))
        t = int(rng.integers(3, t_total + 1))
        params = GammaParams.from_gamma(gamma, t_total, t_star, k_x)
        grad = att_gradient(params, t)
        h = 1e-6
        fd = np.empty(l1)
        for j in range(l1):
            up, dn = gamma.copy(), gamma.copy()
            up[j] += h
            dn[j] -= h
            fd[j] = (
                att_value(GammaParams.from_gamma(up, t_total, t_star, k_x), t)
                - att_value(GammaParams.from_gamma(dn, t_total, t_star, k_x), t)
            ) / (2 * h)
        assert_allclose(grad, fd, rtol=5e-6, atol=5e-6)


def test_att_invariant_to_level_shift_and_w_scale():
    data = make_bench(n=800, f3=1.5, rho=0.8, rep=5)
    fit, params = estimate_gamma1(data, BENCH_SPEC)
    base = att_series(params, fit, data).att

    shifted = PanelDataset(y=data.y + 7.5, z=data.z, d=data.d, t_star=3)
    fit2, params2 = estimate_gamma1(shifted, BENCH_SPEC)
    assert att_series(params2, fit2, shifted).att[3] == pytest.approx(base[3], abs=1e-9)

    z_scaled = data.z.copy()
    z_scaled[:, 1] *= 2.0
    scaled = PanelDataset(y=data.y, z=z_scaled, d=data.d, t_star=3)
    fit3, params3 = estimate_gamma1(scaled, BENCH_SPEC)
    assert att_series(params3, fit3, scaled).att[3] == pytest.approx(base[3], abs=1e-9)


def test_att_invariant_to_unit_order():
    data = make_bench(n=400, f3=2.0, rho=1.0, rep=6)
    perm = np.random.default_rng(0).permutation(data.n)
    shuffled = PanelDataset(y=data.y[perm], z=data.z[perm], d=data.d[perm], t_star=3)
    f1, p1 = estimate_gamma1(data, BENCH_SPEC)
    f2, p2 = estimate_gamma1(shuffled, BENCH_SPEC)
    assert att_value(p1, 3) == pytest.approx(att_value(p2, 3), abs=1e-10)


def test_closed_form_example1_equals_gmm():
    rng = np.random.default_rng(21)
    for _ in range(10):
        data = random_panel(rng, n=50, k=1)
        f3, att3 = closed_form_example1(data)
        fit, params = estimate_gamma1(data, EXAMPLE1_SPEC)
        assert f3 == pytest.approx(params.f[0], abs=1e-10)
        assert att3 == pytest.approx(att_value(params, 3), abs=1e-10)


def test_closed_form_example1_recovers_planted_effect():
    data = make_example1(n=40000, rep=0)
    f3, att3 = closed_form_example1(data)
    assert f3 == pytest.approx(1.5, abs=0.05)
    assert att3 == pytest.approx(1.0, abs=0.08)


def test_closed_form_example1_zero_denominator():
    y, z, d = _ok_arrays()
    y[:, 1] = y[:, 0]
    with pytest.raises(ZeroDenominator):
        closed_form_example1(PanelDataset(y=y, z=np.ones((8, 1)), d=d, t_star=3))


def test_closed_form_example2_equals_gmm():
    rng = np.random.default_rng(23)
    for _ in range(10):
        data = random_panel(rng, n=60, k=2, binary_w=True)
        f3, theta3, att3 = closed_form_example2(data)
        fit, params = estimate_gamma1(data, BENCH_SPEC)
        assert f3 == pytest.approx(params.f[0], abs=1e-10)
        assert theta3 == pytest.approx(params.beta[0, 0], abs=1e-10)
        assert att3 == pytest.approx(att_value(params, 3), abs=1e-10)


def test_check_relevance_strong_and_degenerate():
    data = make_bench(n=5000, f3=1.0, rho=1.0, rep=7)
    report = check_relevance(data, BENCH_SPEC)
    assert report.rank == report.needed == 2
    assert not report.flagged
    assert set(report.coefficients) == {0, 1}
    coef_w, se_w = report.coefficients[1]
    assert coef_w == pytest.approx(1.0, abs=0.1)
    assert se_w > 0

    z_dup = data.z.copy()
    z_dup[:, 1] = 1.0
    degenerate = PanelDataset(y=data.y, z=z_dup, d=data.d, t_star=3)
    report2 = check_relevance(degenerate, BENCH_SPEC)
    assert report2.flagged
    assert report2.rank < report2.needed or report2.cond > report2.threshold
