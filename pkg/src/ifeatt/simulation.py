"""Monte Carlo laboratory for the three-period benchmark design.

The data generating process: three periods, treatment starting in
period 3 with a unit effect, Y_t(0) = theta_t + xi + lambda F_t
+ alpha W + U_t, treated share one half, xi|D=d ~ N(d,1), U iid
standard normal, and (lambda, W)|D=d bivariate normal with means
(d, 0), unit variances, and correlation rho.  The grid varies the
period-3 trend value f3, the instrument strength rho, and n, and
reports bias, root mean squared error, and median absolute deviation
about the true effect of 1 for the interactive-trend GMM estimator
and the two comparators.

Replication r of a grid cell draws from the substream
(seed, (stream, r)), so every dataset is reproducible in isolation
and results do not depend on execution order.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from itertools import product

import numpy as np

from .comparators import did_att, lt_att
from .errors import DataError, EstimationError, SpecMismatch
from .panel import F1, F2, ModelSpec, PanelDataset, att_value, estimate_gamma1

__all__ = [
    "GRID_F3",
    "GRID_RHO",
    "DEFAULT_SEED",
    "SIM_ESTIMATORS",
    "SimConfig",
    "SimDraws",
    "SimCell",
    "SimResult",
    "draw_latents",
    "assemble_panel",
    "generate_panel",
    "run_cell",
    "run_grid",
    "default_grid",
    "emit_table",
    "parse_table_csv",
]

GRID_F3: tuple[float, ...] = (1.0, 1.5, 2.0)
GRID_RHO: tuple[float, ...] = (0.1, 0.5, 1.0)
DEFAULT_SEED = 632017


@dataclass(frozen=True)
class SimConfig:
    """One grid cell of the benchmark design.

    ``stream`` separates substream families so distinct cells sharing a
    seed still draw independent datasets.  ``alpha`` is the direct
    effect of W on untreated outcomes; the benchmark tables use 0.
    """

    n: int = 1000
    reps: int = 1000
    f3: float = 1.0
    rho: float = 0.5
    seed: int = DEFAULT_SEED
    stream: int = 0
    theta3: float = 2.0
    p: float = 0.5
    att_true: float = 1.0
    alpha: float = 0.0

    def __post_init__(self):
        if self.n < 4:
            raise SpecMismatch(f"n must be at least 4, got {self.n}")
        if self.reps < 1:
            raise SpecMismatch(f"reps must be at least 1, got {self.reps}")
        if abs(self.rho) > 1.0:
            raise SpecMismatch(f"|rho| must not exceed 1, got {self.rho}")
        if not 0.0 < self.p < 1.0:
            raise SpecMismatch(f"p must lie strictly in (0,1), got {self.p}")


@dataclass(frozen=True)
class SimDraws:
    """Latent draws behind one simulated panel.

    lam and w are bivariate normal given d with means (d, 0), unit
    variances, and correlation rho; xi is N(d, 1); u is the (n, 3)
    matrix of iid standard normal shocks.
    """

    d: np.ndarray
    xi: np.ndarray
    lam: np.ndarray
    w: np.ndarray
    u: np.ndarray


def _rng_for(cfg: SimConfig, rep_index: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=cfg.seed, spawn_key=(cfg.stream, rep_index))
    return np.random.default_rng(ss)


def draw_latents(cfg: SimConfig, rep_index: int) -> SimDraws:
    """Draw the latent variables for one replication.

    The draw order (d, xi, a, b, u) is part of the reproducibility
    contract; lam = d + a and w = rho a + sqrt(1-rho^2) b deliver the
    required conditional joint.  At rho = 1, w equals lam - d exactly.
    """
    rng = _rng_for(cfg, rep_index)
    n = cfg.n
    d = (rng.random(n) < cfg.p).astype(np.float64)
    xi = d + rng.standard_normal(n)
    a = rng.standard_normal(n)
    b = rng.standard_normal(n)
    lam = d + a
    w = cfg.rho * a + math.sqrt(1.0 - cfg.rho**2) * b
    u = rng.standard_normal((n, 3))
    return SimDraws(d=d, xi=xi, lam=lam, w=w, u=u)


def assemble_panel(cfg: SimConfig, draws: SimDraws) -> PanelDataset:
    """Build the observed panel from latent draws."""
    theta = np.array([0.0, 0.0, cfg.theta3])
    f = np.array([F1, F2, cfg.f3])
    y0 = (
        theta[None, :]
        + draws.xi[:, None]
        + np.outer(draws.lam, f)
        + cfg.alpha * draws.w[:, None]
        + draws.u
    )
    y = y0.copy()
    y[:, 2] += cfg.att_true * draws.d
    z = np.column_stack([np.ones(cfg.n), draws.w])
    return PanelDataset(y=y, z=z, d=draws.d, t_star=3)


def generate_panel(cfg: SimConfig, rep_index: int) -> PanelDataset:
    """Simulate one replication's dataset."""
    return assemble_panel(cfg, draw_latents(cfg, rep_index))


# the benchmark spec: intercept in the period-varying set, W excluded
_BENCH_SPEC = ModelSpec(x_cols=(0,), w_cols=(1,))


def _sim_ife(data: PanelDataset) -> float:
    _, params = estimate_gamma1(data, _BENCH_SPEC)
    return att_value(params, 3)


def _sim_did(data: PanelDataset) -> float:
    return did_att(data, 3)


def _sim_lt(data: PanelDataset) -> float:
    return lt_att(data, 3)


SIM_ESTIMATORS = {
    "ife": _sim_ife,
    "did": _sim_did,
    "lt": _sim_lt,
}


@dataclass(frozen=True)
class SimCell:
    """Metrics for one (estimator, f3, rho, n) cell.

    bias = mean(estimate) - att_true over successful replications,
    rmse the root mean squared deviation, mad the median absolute
    deviation, all about the true effect.
    """

    estimator: str
    f3: float
    rho: float
    n: int
    reps: int
    bias: float
    rmse: float
    mad: float
    failed_reps: int


@dataclass(frozen=True)
class SimResult:
    """Grid of cells with a keyed lookup."""

    cells: tuple[SimCell, ...]

    def cell(self, estimator: str, f3: float, rho: float, n: int) -> SimCell:
        for c in self.cells:
            if (
                c.estimator == estimator
                and c.f3 == f3
                and c.rho == rho
                and c.n == n
            ):
                return c
        raise KeyError(f"no cell ({estimator}, f3={f3}, rho={rho}, n={n})")

    @property
    def estimators(self) -> tuple[str, ...]:
        seen: list[str] = []
        for c in self.cells:
            if c.estimator not in seen:
                seen.append(c.estimator)
        return tuple(seen)


def _metrics(errors: np.ndarray) -> tuple[float, float, float]:
    if errors.size == 0:
        return float("nan"), float("nan"), float("nan")
    bias = float(errors.mean())
    rmse = float(np.sqrt((errors**2).mean()))
    mad = float(np.median(np.abs(errors)))
    return bias, rmse, mad


def run_cell(cfg: SimConfig, estimators: tuple[str, ...] = ("ife", "did", "lt")) -> list[SimCell]:
    """Run every replication of one cell, sharing datasets across estimators."""
    for name in estimators:
        if name not in SIM_ESTIMATORS:
            raise KeyError(f"unknown estimator {name!r}; have {sorted(SIM_ESTIMATORS)}")
    draws = {name: np.full(cfg.reps, np.nan) for name in estimators}
    for r in range(cfg.reps):
        data = generate_panel(cfg, r)
        for name in estimators:
            try:
                draws[name][r] = SIM_ESTIMATORS[name](data)
            except (DataError, EstimationError):
                pass
    cells = []
    for name in estimators:
        vals = draws[name]
        ok = np.isfinite(vals)
        bias, rmse, mad = _metrics(vals[ok] - cfg.att_true)
        cells.append(
            SimCell(
                estimator=name,
                f3=cfg.f3,
                rho=cfg.rho,
                n=cfg.n,
                reps=cfg.reps,
                bias=bias,
                rmse=rmse,
                mad=mad,
                failed_reps=int(cfg.reps - ok.sum()),
            )
        )
    return cells


def default_grid(n: int = 1000, reps: int = 1000, seed: int = DEFAULT_SEED) -> list[SimConfig]:
    """The benchmark 3 x 3 grid over f3 and rho, one stream per cell."""
    return [
        SimConfig(n=n, reps=reps, f3=f3, rho=rho, seed=seed, stream=i)
        for i, (f3, rho) in enumerate(product(GRID_F3, GRID_RHO))
    ]


def run_grid(
    cfgs: list[SimConfig], estimators: tuple[str, ...] = ("ife", "did", "lt")
) -> SimResult:
    """Run every cell of a grid.

    Cells are independent given their (seed, stream) pairs, so the
    result does not depend on the order in which they run.
    """
    cells: list[SimCell] = []
    for cfg in cfgs:
        cells.extend(run_cell(cfg, estimators))
    return SimResult(cells=tuple(cells))


_CSV_FIELDS = ["estimator", "f3", "rho", "n", "reps", "bias", "rmse", "mad", "failed_reps"]


def emit_table(result: SimResult, fmt: str = "text") -> str:
    """Render a result grid as aligned text or round-trippable CSV.

    Text output groups rows by f3 then rho with metric-major column
    blocks (bias, rmse, mad crossed with estimators).  CSV output
    carries full float precision so parsing it back reproduces the
    values exactly.
    """
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(_CSV_FIELDS)
        for c in result.cells:
            writer.writerow(
                [c.estimator, repr(c.f3), repr(c.rho), c.n, c.reps,
                 repr(c.bias), repr(c.rmse), repr(c.mad), c.failed_reps]
            )
        return buf.getvalue()
    if fmt != "text":
        raise ValueError(f"unknown format {fmt!r}; use 'text' or 'csv'")

    if not result.cells:
        return "empty grid\n"
    ests = result.estimators
    metrics = ["bias", "rmse", "mad"]
    lines = []
    width = 9
    for n in sorted({c.n for c in result.cells}):
        sub = [c for c in result.cells if c.n == n]
        lines.append(f"n={n}, reps={sub[0].reps}")
        head1 = " " * 12 + "".join(
            m.upper().center(width * len(ests) + 2) for m in metrics
        )
        head2 = " " * 12 + "".join(
            "".join(e.rjust(width) for e in ests) + "  " for _ in metrics
        )
        lines.append(head1)
        lines.append(head2)
        for f3 in sorted({c.f3 for c in sub}):
            lines.append(f"f3={f3:g}")
            for rho in sorted({c.rho for c in sub if c.f3 == f3}):
                row = f"  rho={rho:<6g}"
                for m in metrics:
                    for e in ests:
                        cell = next(
                            c for c in sub
                            if c.estimator == e and c.f3 == f3 and c.rho == rho
                        )
                        row += f"{getattr(cell, m):>{width}.3f}"
                    row += "  "
                lines.append(row)
        lines.append("")
    return "\n".join(lines)


def parse_table_csv(text: str) -> SimResult:
    """Inverse of ``emit_table(result, "csv")``."""
    reader = csv.DictReader(io.StringIO(text))
    cells = []
    for row in reader:
        cells.append(
            SimCell(
                estimator=row["estimator"],
                f3=float(row["f3"]),
                rho=float(row["rho"]),
                n=int(row["n"]),
                reps=int(row["reps"]),
                bias=float(row["bias"]),
                rmse=float(row["rmse"]),
                mad=float(row["mad"]),
                failed_reps=int(row["failed_reps"]),
            )
        )
    return SimResult(cells=tuple(cells))
