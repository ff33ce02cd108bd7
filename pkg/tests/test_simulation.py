import numpy as np
import pytest
from numpy.testing import assert_allclose

from _dgp import BENCH_SPEC
from ifeatt.errors import SpecMismatch
from ifeatt.panel import att_value, estimate_gamma1
from ifeatt.simulation import (
    GRID_F3,
    GRID_RHO,
    SimConfig,
    SimResult,
    assemble_panel,
    default_grid,
    draw_latents,
    emit_table,
    generate_panel,
    parse_table_csv,
    run_cell,
    run_grid,
)


def test_config_validation():
    with pytest.raises(SpecMismatch):
        SimConfig(n=3)
    with pytest.raises(SpecMismatch):
        SimConfig(reps=0)
    with pytest.raises(SpecMismatch):
        SimConfig(rho=1.2)
    with pytest.raises(SpecMismatch):
        SimConfig(p=1.0)


def test_draws_reproducible():
    cfg = SimConfig(n=50, reps=1, f3=1.5, rho=0.5, seed=3)
    a = draw_latents(cfg, 4)
    b = draw_latents(cfg, 4)
    assert np.array_equal(a.d, b.d)
    assert np.array_equal(a.u, b.u)
    assert np.array_equal(a.w, b.w)
    c = draw_latents(cfg, 5)
    assert not np.array_equal(a.u, c.u)
    other_stream = draw_latents(SimConfig(n=50, reps=1, f3=1.5, rho=0.5, seed=3, stream=1), 4)
    assert not np.array_equal(a.u, other_stream.u)


def test_perfect_correlation_ties_instrument_to_loading():
    cfg = SimConfig(n=2000, reps=1, rho=1.0)
    draws = draw_latents(cfg, 0)
    assert_allclose(draws.w, draws.lam - draws.d, atol=1e-12)


def test_latent_moments_at_large_n():
    cfg = SimConfig(n=100_000, reps=1, f3=1.5, rho=0.5)
    draws = draw_latents(cfg, 0)
    for dv in (0.0, 1.0):
        g = draws.d == dv
        corr = np.corrcoef(draws.lam[g], draws.w[g])[0, 1]
        assert corr == pytest.approx(0.5, abs=0.05)
        assert draws.lam[g].mean() == pytest.approx(dv, abs=0.05)
        assert draws.w[g].mean() == pytest.approx(0.0, abs=0.05)
        assert draws.lam[g].var() == pytest.approx(1.0, abs=0.05)
    assert draws.d.mean() == pytest.approx(0.5, abs=0.02)


def test_assembled_outcome_gaps():
    cfg = SimConfig(n=100_000, reps=1, f3=1.5, rho=0.5)
    data = assemble_panel(cfg, draw_latents(cfg, 1))
    d1 = data.d == 1.0
    # untreated-outcome gap in period 3 is E[xi gap] + f3 E[lam gap]
    # = 1 + f3, plus the unit treatment effect on top
    gap3 = data.y[d1, 2].mean() - data.y[~d1, 2].mean()
    assert gap3 == pytest.approx(1.0 + cfg.f3 + cfg.att_true, abs=0.05)
    gap2 = data.y[d1, 1].mean() - data.y[~d1, 1].mean()
    assert gap2 == pytest.approx(2.0, abs=0.05)
    assert np.array_equal(data.z[:, 0], np.ones(cfg.n))


def test_direct_instrument_effect_is_a_no_op():
    # W is time constant, so shifting untreated outcomes by alpha*W
    # cancels from every difference the estimator uses
    for rep in range(3):
        base = SimConfig(n=800, reps=1, f3=1.5, rho=0.7)
        shifted = SimConfig(n=800, reps=1, f3=1.5, rho=0.7, alpha=1.0)
        d0 = generate_panel(base, rep)
        d1 = generate_panel(shifted, rep)
        f0, p0 = estimate_gamma1(d0, BENCH_SPEC)
        f1, p1 = estimate_gamma1(d1, BENCH_SPEC)
        assert p1.f[0] == pytest.approx(p0.f[0], abs=1e-9)
        assert att_value(p1, 3) == pytest.approx(att_value(p0, 3), abs=1e-9)


def test_run_cell_shares_datasets_across_estimators():
    cfg = SimConfig(n=300, reps=8, f3=2.0, rho=0.8, seed=21)
    full = run_cell(cfg)
    assert [c.estimator for c in full] == ["ife", "did", "lt"]
    only_did = run_cell(cfg, estimators=("did",))
    assert only_did[0] == next(c for c in full if c.estimator == "did")
    again = run_cell(cfg)
    assert again == full
    assert all(c.failed_reps == 0 for c in full)


def test_run_cell_rejects_unknown_estimator():
    with pytest.raises(KeyError):
        run_cell(SimConfig(n=100, reps=1), estimators=("ife", "huh"))


def test_default_grid_layout():
    cfgs = default_grid(n=500, reps=10)
    assert len(cfgs) == 9
    assert {(c.f3, c.rho) for c in cfgs} == set(
        (f, r) for f in GRID_F3 for r in GRID_RHO
    )
    assert sorted(c.stream for c in cfgs) == list(range(9))


def test_run_grid_order_invariant():
    a = SimConfig(n=200, reps=6, f3=1.0, rho=0.5, stream=0)
    b = SimConfig(n=200, reps=6, f3=2.0, rho=1.0, stream=1)
    r1 = run_grid([a, b], estimators=("did", "lt"))
    r2 = run_grid([b, a], estimators=("did", "lt"))
    for est in ("did", "lt"):
        for cfg in (a, b):
            assert r1.cell(est, cfg.f3, cfg.rho, cfg.n) == r2.cell(
                est, cfg.f3, cfg.rho, cfg.n
            )
    with pytest.raises(KeyError):
        r1.cell("did", 9.0, 0.5, 200)


def test_csv_round_trip_is_exact():
    cfg = SimConfig(n=150, reps=5, f3=1.5, rho=0.5)
    result = run_grid([cfg])
    text = emit_table(result, fmt="csv")
    assert parse_table_csv(text) == result


def test_text_table_renders():
    cfg = SimConfig(n=150, reps=5, f3=1.5, rho=0.5)
    result = run_grid([cfg])
    out = emit_table(result, fmt="text")
    assert "n=150" in out
    assert "f3=1.5" in out
    assert "rho=0.5" in out
    assert "BIAS" in out and "RMSE" in out and "MAD" in out
    assert emit_table(SimResult(cells=()), fmt="text") == "empty grid\n"
    with pytest.raises(ValueError):
        emit_table(result, fmt="json")


def test_benchmark_grid_internal_consistency(grid1000):
    result, _ = grid1000
    assert result.estimators == ("ife", "did", "lt")
    for c in result.cells:
        assert c.failed_reps <= 10
        if c.estimator != "ife" or c.rho >= 0.5:
            assert np.isfinite(c.rmse)
        assert c.mad <= c.rmse + 1e-12
    # the trend-difference comparator ignores the instrument, so its
    # bias cannot move with rho beyond simulation noise
    for f3 in GRID_F3:
        did_biases = [result.cell("did", f3, rho, 1000).bias for rho in GRID_RHO]
        assert max(did_biases) - min(did_biases) < 0.03
    # a weaker instrument can only make the interactive fit noisier
    for f3 in GRID_F3:
        strong = result.cell("ife", f3, 1.0, 1000).mad
        weak = result.cell("ife", f3, 0.1, 1000).mad
        assert strong <= weak
