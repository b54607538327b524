"""Survival labels: extraction, horizon truncation, time discretisation,
label statistics, and the nonparametric validation estimators.

Conventions, fixed here and relied on by the tests:

* Horizon truncation: T' = min(T, H) and d' = d if T <= H else 0. An event
  exactly at T = H keeps its event code.
* Discretisation: interior cuts are the j/B linear-interpolation quantiles
  (h = (n - 1) * p between order statistics) of the training durations;
  endpoints are forced to exactly 0 and H. A duration t in [b_{j-1}, b_j)
  maps to bin j; t = H maps to the last bin (closed on the right).
* Medians use the lower-median convention: sorted[(n - 1) // 2].
* Kaplan-Meier bands: 95% via the Greenwood variance on the log scale,
  ci = S * exp(-+ z * sqrt(sum d_i / (n_i (n_i - d_i)))), z = Phi^-1(0.975),
  clipped to [0, 1]; (0, 0) once S reaches 0.
* Cumulative incidence: Aalen-Johansen, CIF_k jumps by S(t-) * d_k(t) / n(t)
  with S the all-cause product-limit estimate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import schema
from .errors import GridDegenerate, GridOutOfRange, LabelUnknownOutcome
from .ingest import CohortTable

Z_975 = 1.959963984540054


@dataclass(frozen=True)
class SurvivalLabels:
    stay_ids: tuple[str, ...]
    durations: np.ndarray  # float64 hours
    events: np.ndarray     # int64 codes in {0..num_risks}
    num_risks: int

    def __len__(self) -> int:
        return len(self.stay_ids)

    def subset(self, keep: np.ndarray) -> "SurvivalLabels":
        idx = np.flatnonzero(keep) if keep.dtype == bool else keep
        return SurvivalLabels(
            stay_ids=tuple(self.stay_ids[i] for i in idx),
            durations=self.durations[idx],
            events=self.events[idx],
            num_risks=self.num_risks,
        )


@dataclass(frozen=True)
class DiscretizationGrid:
    cuts: np.ndarray  # float64, strictly increasing, cuts[0] = 0, cuts[-1] = H
    method: str

    @property
    def n_bins(self) -> int:
        return len(self.cuts) - 1

    @property
    def horizon(self) -> float:
        return float(self.cuts[-1])


@dataclass(frozen=True)
class KMCurve:
    times: np.ndarray      # distinct event times, increasing
    survival: np.ndarray   # S(t) at each event time
    ci_lower: np.ndarray
    ci_upper: np.ndarray
    at_risk: np.ndarray    # subjects at risk just before each event time
    n_subjects: int


@dataclass(frozen=True)
class CIFCurves:
    times: np.ndarray               # all-cause event times, increasing
    survival: np.ndarray            # event-free survival S(t)
    cif: dict[int, np.ndarray]      # cause -> CIF_k evaluated at times


def extract_labels(cohort: CohortTable, dataset: str | None = None) -> SurvivalLabels:
    """Read (duration, event) pairs off the cohort using the alias table."""
    dataset = dataset or cohort.dataset
    num_risks = 4 if dataset == "mcmed" else 1
    durations = np.array([r.duration_hours for r in cohort.records], dtype=np.float64)
    events = np.empty(len(cohort.records), dtype=np.int64)
    for i, record in enumerate(cohort.records):
        code = schema.outcome_code(dataset, record.raw_outcome)
        if code is None:
            raise LabelUnknownOutcome(
                f"outcome {record.raw_outcome!r} for stay {record.stay_id} has no alias entry")
        events[i] = code
    return SurvivalLabels(stay_ids=tuple(cohort.stay_ids()), durations=durations,
                          events=events, num_risks=num_risks)


def truncate_horizon(labels: SurvivalLabels, horizon: float) -> SurvivalLabels:
    """Administrative censoring at the horizon; idempotent."""
    durations = np.minimum(labels.durations, float(horizon))
    events = np.where(labels.durations <= horizon, labels.events, 0)
    return SurvivalLabels(stay_ids=labels.stay_ids, durations=durations,
                          events=events.astype(np.int64), num_risks=labels.num_risks)


def fit_grid(train_labels: SurvivalLabels, n_bins: int, method: str,
             horizon: float) -> DiscretizationGrid:
    """Fit the time-bin boundaries on training durations only."""
    durations = train_labels.durations
    horizon = float(horizon)
    if method == "uniform":
        cuts = np.linspace(0.0, horizon, n_bins + 1)
        return DiscretizationGrid(cuts=cuts, method=method)
    if method != "quantile":
        raise ValueError(f"unknown discretisation method {method!r}")

    distinct = np.unique(durations)
    if len(distinct) < n_bins:
        raise GridDegenerate(
            f"quantile binning needs at least {n_bins} distinct durations, got {len(distinct)}")
    probs = np.arange(1, n_bins) / n_bins
    interior = np.quantile(durations, probs, method="linear")
    interior = interior[(interior > 0.0) & (interior < horizon)]
    cuts = np.unique(np.concatenate(([0.0], interior, [horizon])))
    if len(cuts) - 1 < 2:
        raise GridDegenerate(
            f"only {len(cuts) - 1} bin(s) survive duplicate-cut collapsing")
    return DiscretizationGrid(cuts=cuts, method=method)


def apply_grid(labels: SurvivalLabels | np.ndarray, grid: DiscretizationGrid) -> np.ndarray:
    """Map durations to 1-based bin indices; t = H falls in the last bin."""
    durations = labels.durations if isinstance(labels, SurvivalLabels) else np.asarray(labels)
    horizon = grid.horizon
    if durations.size and (durations.min() < 0.0 or durations.max() > horizon):
        raise GridOutOfRange(
            f"durations outside [0, {horizon}]; truncate_horizon was not applied")
    bins = np.searchsorted(grid.cuts, durations, side="right")
    return np.minimum(bins, grid.n_bins).astype(np.int64)


def _lower_median(values: np.ndarray) -> float:
    ordered = np.sort(values)
    return float(ordered[(len(ordered) - 1) // 2])


def label_statistics(labels: SurvivalLabels) -> dict:
    """Event/censor rates and duration summaries (lower-median convention)."""
    n = len(labels)
    if n == 0:
        raise ValueError("labels are empty")
    events = labels.events
    durations = labels.durations
    event_mask = events > 0

    event_rate = {}
    event_mean_time = {}
    for code in range(1, labels.num_risks + 1):
        mask = events == code
        event_rate[str(code)] = int(mask.sum()) / n
        event_mean_time[str(code)] = float(durations[mask].mean()) if mask.any() else None

    stats = {
        "n": n,
        "censor_rate": int((events == 0).sum()) / n,
        "event_rate": event_rate,
        "event_rate_overall": int(event_mask.sum()) / n,
        "event_mean_time": event_mean_time,
        "duration_mean": float(durations.mean()),
        "duration_median": _lower_median(durations),
        "duration_mean_event": float(durations[event_mask].mean()) if event_mask.any() else None,
        "duration_median_event": _lower_median(durations[event_mask]) if event_mask.any() else None,
        "duration_mean_censored": float(durations[~event_mask].mean()) if (~event_mask).any() else None,
        "duration_median_censored": _lower_median(durations[~event_mask]) if (~event_mask).any() else None,
    }
    return stats


def _event_table(durations: np.ndarray, events: np.ndarray):
    """Distinct event times with per-time event counts and at-risk counts."""
    order = np.argsort(durations, kind="stable")
    durations = durations[order]
    events = events[order]
    event_times = np.unique(durations[events > 0])
    n = len(durations)
    at_risk = n - np.searchsorted(durations, event_times, side="left")
    return event_times, at_risk, durations, events


def kaplan_meier(labels: SurvivalLabels) -> KMCurve:
    """Product-limit estimator over distinct event times (any nonzero code).

    Zero events yields a constant-1 curve with an empty event-time list.
    """
    n = len(labels)
    event_times, at_risk, durations, events = _event_table(labels.durations, labels.events)
    if len(event_times) == 0:
        empty = np.array([], dtype=np.float64)
        return KMCurve(times=empty, survival=empty.copy(), ci_lower=empty.copy(),
                       ci_upper=empty.copy(), at_risk=np.array([], dtype=np.int64),
                       n_subjects=n)

    survival = np.empty(len(event_times))
    lower = np.empty(len(event_times))
    upper = np.empty(len(event_times))
    s = 1.0
    greenwood = 0.0  # running sum of d / (n (n - d))
    for i, t in enumerate(event_times):
        d = int(((durations == t) & (events > 0)).sum())
        r = int(at_risk[i])
        s *= 1.0 - d / r
        survival[i] = s
        if s > 0.0 and r > d:
            greenwood += d / (r * (r - d))
            half = Z_975 * np.sqrt(greenwood)
            lower[i] = max(0.0, s * np.exp(-half))
            upper[i] = min(1.0, s * np.exp(half))
        else:
            lower[i] = 0.0 if s <= 0.0 else max(0.0, s * np.exp(-Z_975 * np.sqrt(greenwood)))
            upper[i] = 0.0 if s <= 0.0 else min(1.0, s * np.exp(Z_975 * np.sqrt(greenwood)))
    return KMCurve(times=event_times, survival=survival, ci_lower=lower,
                   ci_upper=upper, at_risk=at_risk.astype(np.int64), n_subjects=n)


def cumulative_incidence(labels: SurvivalLabels) -> CIFCurves:
    """Aalen-Johansen estimator; for a single risk CIF_1 = 1 - KM."""
    event_times, at_risk, durations, events = _event_table(labels.durations, labels.events)
    causes = list(range(1, labels.num_risks + 1))
    if len(event_times) == 0:
        empty = np.array([], dtype=np.float64)
        return CIFCurves(times=empty, survival=empty.copy(),
                         cif={k: empty.copy() for k in causes})

    survival = np.empty(len(event_times))
    cif = {k: np.empty(len(event_times)) for k in causes}
    cum = {k: 0.0 for k in causes}
    s_prev = 1.0
    for i, t in enumerate(event_times):
        r = int(at_risk[i])
        at_t = durations == t
        d_total = int((at_t & (events > 0)).sum())
        for k in causes:
            d_k = int((at_t & (events == k)).sum())
            if d_k:
                cum[k] += s_prev * d_k / r
            cif[k][i] = cum[k]
        s_prev *= 1.0 - d_total / r
        survival[i] = s_prev
    return CIFCurves(times=event_times, survival=survival, cif=cif)
