"""Treatment effect estimation under an interactive trend in untreated outcomes.

The estimand is the average effect of treatment on the treated in each
post-treatment period.  Untreated outcomes may load on an unobserved
common trend with unit-specific strength; covariates whose effect is
constant over time instrument the trend proxy (the period-1-to-2
outcome change), and everything is estimated in one stacked linear GMM
system with analytic standard errors.

Entry points:

- :func:`estimate_gamma1` / :func:`att_series` for balanced panels,
- :func:`estimate_att_rc` for pooled repeated cross sections,
- :func:`fit_serial_uncorr` / :func:`fit_timevarying` for the designs
  identified through serially uncorrelated shocks or covariate history,
- :func:`did_att` / :func:`lt_att` comparators,
- :func:`bootstrap_att`, :func:`pretest_wald`, :func:`overid_report`
  for inference,
- :func:`run_grid` / :func:`emit_table` for the benchmark simulations,
- :mod:`ifeatt.dataio` and :mod:`ifeatt.events` for CSV ingestion and
  staggered-adoption event studies,
- ``ifeatt`` (console script) for the command-line surface.
"""

from .alt import (
    AltFitT3,
    AltFitT4,
    TvPanelDataset,
    att_serial_uncorr,
    att_timevarying,
    estimate_serial_uncorr,
    estimate_timevarying,
    fit_serial_uncorr,
    fit_timevarying,
)
from .comparators import (
    BiasOracleInputs,
    did_att,
    did_bias_oracle,
    lt_att,
    lt_bias_oracle,
)
from .dataio import (
    ColumnSchema,
    MultiGroupDataset,
    load_multigroup_csv,
    load_panel_csv,
    load_rc_csv,
    load_tv_panel_csv,
    write_panel_csv,
)
from .errors import (
    DataError,
    EstimationError,
    IfeattError,
)
from .events import EventStudyResult, group_time_event_study
from .gmm import (
    GmmFit,
    MomentSystem,
    crossprod_mean,
    delta_method,
    j_pvalue,
    psd_inverse,
    solve_linear_gmm,
    two_step_fit,
)
from .inference import (
    BootstrapResult,
    OveridReport,
    WaldResult,
    bootstrap_att,
    overid_report,
    point_estimates,
    pretest_wald,
)
from .panel import (
    F1,
    F2,
    AttSeries,
    Dims,
    GammaParams,
    ModelSpec,
    PanelDataset,
    RelevanceReport,
    att_gradient,
    att_series,
    att_value,
    check_relevance,
    closed_form_example1,
    closed_form_example2,
    estimate_gamma1,
)
from .rc import (
    PiShares,
    RcDataset,
    estimate_att_rc,
    estimate_pi,
    explode_panel,
    fit_rc,
)
from .simulation import (
    SimCell,
    SimConfig,
    SimResult,
    default_grid,
    emit_table,
    generate_panel,
    run_grid,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # errors
    "IfeattError", "DataError", "EstimationError",
    # gmm engine
    "MomentSystem", "GmmFit", "crossprod_mean", "solve_linear_gmm",
    "two_step_fit", "psd_inverse", "delta_method", "j_pvalue",
    # panel estimator
    "F1", "F2", "PanelDataset", "ModelSpec", "Dims", "GammaParams",
    "AttSeries", "RelevanceReport", "estimate_gamma1", "att_value",
    "att_gradient", "att_series", "closed_form_example1",
    "closed_form_example2", "check_relevance",
    # comparators
    "BiasOracleInputs", "did_att", "lt_att", "did_bias_oracle", "lt_bias_oracle",
    # repeated cross sections
    "RcDataset", "PiShares", "estimate_pi", "fit_rc", "estimate_att_rc",
    "explode_panel",
    # alternative identification routes
    "TvPanelDataset", "AltFitT3", "AltFitT4", "estimate_serial_uncorr",
    "fit_serial_uncorr", "att_serial_uncorr", "estimate_timevarying",
    "fit_timevarying", "att_timevarying",
    # inference
    "BootstrapResult", "WaldResult", "OveridReport", "point_estimates",
    "bootstrap_att", "pretest_wald", "overid_report",
    # simulation
    "SimConfig", "SimCell", "SimResult", "generate_panel", "default_grid",
    "run_grid", "emit_table",
    # io and event studies
    "ColumnSchema", "load_panel_csv", "load_rc_csv", "load_tv_panel_csv",
    "load_multigroup_csv", "write_panel_csv", "MultiGroupDataset",
    "EventStudyResult", "group_time_event_study",
]
