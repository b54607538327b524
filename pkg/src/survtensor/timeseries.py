"""Windowed dynamic features: hourly aggregate -> fixed W-window sequences,
plus the training-set missingness filter.

A window's value is the unweighted mean of the hourly means of the hours
that have data (two-stage aggregation); a window with no data is missing.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .accumulate import HourlyAggregate
from .config import PipelineConfig
from .errors import FilterEmpty, FilterSchema


@dataclass
class WindowedDynamic:
    stays: list[str]
    windows: int
    features: list[str]
    values: np.ndarray    # (N, W, F) float64, NaN where missing
    observed: np.ndarray  # (N, W, F) bool

    def subset_stays(self, stay_ids: list[str]) -> "WindowedDynamic":
        index = {stay: i for i, stay in enumerate(self.stays)}
        rows = [index[s] for s in stay_ids]
        return WindowedDynamic(stays=list(stay_ids), windows=self.windows,
                               features=list(self.features),
                               values=self.values[rows], observed=self.observed[rows])


def windowise(hourly: HourlyAggregate, stay_order: list[str],
              cfg: PipelineConfig) -> WindowedDynamic:
    """Aggregate hourly means into W windows of w hours per stay.

    The feature axis is the sorted union of every feature name present in
    the aggregate (all splits), so split tensors share one column space.
    """
    features = hourly.feature_names()
    n, w, width = len(stay_order), cfg.num_windows, cfg.window_size_hours
    stay_index = {stay: i for i, stay in enumerate(stay_order)}
    feat_index = {name: j for j, name in enumerate(features)}

    grid = np.full((n, cfg.max_hours, len(features)), np.nan)
    for (stay, hour, feature), (total, count) in hourly.entries.items():
        i = stay_index.get(stay)
        if i is None:
            continue
        grid[i, hour, feat_index[feature]] = total / count

    shaped = grid.reshape(n, w, width, len(features))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", category=RuntimeWarning)
        values = np.nanmean(shaped, axis=2)
    observed = ~np.isnan(values)
    return WindowedDynamic(stays=list(stay_order), windows=w, features=features,
                           values=values, observed=observed)


def fit_feature_filter(train: WindowedDynamic, threshold: float) -> list[str]:
    """Retain a feature iff its observed fraction of training cells is at
    least the threshold (computed on the training split only)."""
    n_cells = train.observed.shape[0] * train.observed.shape[1]
    if n_cells == 0:
        raise FilterEmpty("training split has no cells to fit the filter on")
    retained = []
    for j, name in enumerate(train.features):
        fraction = int(train.observed[:, :, j].sum()) / n_cells
        if fraction >= threshold:
            retained.append(name)
    if train.features and not retained:
        raise FilterEmpty(
            f"missingness threshold {threshold} drops all {len(train.features)} features")
    return retained


def apply_feature_filter(data: WindowedDynamic, retained: list[str]) -> WindowedDynamic:
    """Column-subset in retained order; retained must be a subset of data.features."""
    index = {name: j for j, name in enumerate(data.features)}
    cols = []
    for name in retained:
        if name not in index:
            raise FilterSchema(f"retained feature {name!r} is not in the data")
        cols.append(index[name])
    return WindowedDynamic(stays=list(data.stays), windows=data.windows,
                           features=list(retained),
                           values=data.values[:, :, cols],
                           observed=data.observed[:, :, cols])


def observed_fraction(data: WindowedDynamic) -> dict[str, float]:
    """Per-feature observed cell fraction (diagnostics)."""
    n_cells = max(1, data.observed.shape[0] * data.observed.shape[1])
    return {name: int(data.observed[:, :, j].sum()) / n_cells
            for j, name in enumerate(data.features)}
