"""Event-study aggregation for staggered adoption.

Each treated group g (units first treated in period g) is compared
against the never-treated units with t* = g, the chosen estimator is
run per group, and the per-period effects are re-indexed by event time
e = t - g.  At each event time the available groups are averaged with
weights proportional to their treated-unit counts, so the aggregate
tracks the composition of the treated population.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataio import MultiGroupDataset
from .errors import DataError, EstimationError, GroupTooSmall, TooManyFailures
from .inference import MAX_FAILURE_SHARE, point_estimates
from .panel import ModelSpec, PanelDataset

__all__ = ["EventStudyResult", "group_time_event_study"]

#: estimators usable per group: they consume a PanelDataset
_GROUP_ESTIMATORS = ("ife-panel", "did", "lt", "t3")


@dataclass(frozen=True)
class EventStudyResult:
    """Aggregated event-time effects.

    ``estimate[e]`` averages the groups observed at event time e with
    the stored ``weights[e]`` (treated-share weights, summing to 1);
    ``by_group[g][t]`` keeps the underlying calendar-time estimates.
    ``se`` is present only when bootstrap replications were requested.
    """

    estimate: dict[int, float]
    se: dict[int, float] | None
    weights: dict[int, dict[int, float]]
    by_group: dict[int, dict[int, float]]
    groups: tuple[int, ...]
    n: int
    b: int


def _group_panels(data: MultiGroupDataset, min_group_size: int):
    never = data.group == 0
    panels = {}
    for g in data.groups:
        mask = data.group == g
        n_g = int(mask.sum())
        if n_g < min_group_size:
            raise GroupTooSmall(
                f"group {g} has {n_g} treated units, below the minimum {min_group_size}"
            )
        keep = mask | never
        panels[g] = PanelDataset(
            y=data.y[keep],
            z=data.z[keep],
            d=mask[keep].astype(np.float64),
            t_star=g,
        )
    return panels


def _aggregate(
    data: MultiGroupDataset, spec: ModelSpec | None, estimator: str, min_group_size: int
):
    panels = _group_panels(data, min_group_size)
    by_group = {g: point_estimates(p, spec, estimator) for g, p in panels.items()}
    sizes = {g: float((data.group == g).sum()) for g in data.groups}

    per_event: dict[int, dict[int, float]] = {}
    for g, atts in by_group.items():
        for t, v in atts.items():
            per_event.setdefault(t - g, {})[g] = v
    estimate = {}
    weights = {}
    for e in sorted(per_event):
        gs = sorted(per_event[e])
        total = sum(sizes[g] for g in gs)
        w = {g: sizes[g] / total for g in gs}
        estimate[e] = sum(w[g] * per_event[e][g] for g in gs)
        weights[e] = w
    return estimate, weights, by_group


def group_time_event_study(
    data: MultiGroupDataset,
    spec: ModelSpec | None = None,
    estimator: str = "ife-panel",
    min_group_size: int = 10,
    b: int = 0,
    seed: int = 0,
) -> EventStudyResult:
    """Estimate per-group effects and aggregate them by event time.

    Parameters
    ----------
    data : MultiGroupDataset
    spec : ModelSpec or None
        Covariate-role partition, required by the ife-panel estimator.
    estimator : str
        One of ife-panel, did, lt, t3.
    min_group_size : int
        Minimum treated units per group.
    b : int
        Bootstrap replications for standard errors; 0 skips them.
    seed : int
        Root seed for the stratified bootstrap.

    Raises
    ------
    GroupTooSmall
        If any adoption group has fewer treated units than the minimum.
    TooManyFailures
        If more than 5% of bootstrap replications fail.

    Notes
    -----
    The bootstrap resamples units within strata (each adoption group
    and the never-treated pool separately), keeping every stratum's
    size fixed so no replication loses a group entirely.
    """
    if estimator not in _GROUP_ESTIMATORS:
        raise KeyError(
            f"estimator {estimator!r} not usable per group; have {_GROUP_ESTIMATORS}"
        )
    estimate, weights, by_group = _aggregate(data, spec, estimator, min_group_size)
    if b == 0:
        return EventStudyResult(
            estimate=estimate, se=None, weights=weights, by_group=by_group,
            groups=data.groups, n=data.n, b=0,
        )

    strata = [np.flatnonzero(data.group == 0)]
    strata += [np.flatnonzero(data.group == g) for g in data.groups]
    children = np.random.SeedSequence(seed).spawn(b)
    events = sorted(estimate)
    draws = np.full((b, len(events)), np.nan)
    n_failed = 0
    for r in range(b):
        rng = np.random.default_rng(children[r])
        idx = np.concatenate([rng.choice(s, size=s.shape[0], replace=True) for s in strata])
        boot = MultiGroupDataset(
            y=data.y[idx], z=data.z[idx], group=data.group[idx], never_value=0
        )
        try:
            est_r, _, _ = _aggregate(boot, spec, estimator, min_group_size)
        except (DataError, EstimationError):
            n_failed += 1
            continue
        draws[r] = [est_r.get(e, np.nan) for e in events]
    if n_failed > MAX_FAILURE_SHARE * b:
        raise TooManyFailures(f"{n_failed} of {b} bootstrap replications failed")

    se = {}
    for j, e in enumerate(events):
        col = draws[:, j]
        col = col[np.isfinite(col)]
        se[e] = float(col.std(ddof=1)) if col.shape[0] > 1 else float("nan")
    return EventStudyResult(
        estimate=estimate, se=se, weights=weights, by_group=by_group,
        groups=data.groups, n=data.n, b=b,
    )
