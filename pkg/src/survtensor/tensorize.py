"""Final tensor assembly: mask creation, train-fitted z-scaling, imputation,
and static-feature broadcasting.

The mask is computed once, before any imputation, and never rewritten.
Scaling uses the population standard deviation over observed training cells
only; degenerate columns (no observed cells, or zero variance) scale with
sigma = 1 and are flagged so validation can exempt them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import TensorShape
from .staticfeat import StaticMatrix
from .timeseries import WindowedDynamic


@dataclass(frozen=True)
class ScalerParams:
    feature_names: tuple[str, ...]
    mean: np.ndarray            # float64 per column
    std: np.ndarray             # float64 per column, > 0 after degeneracy handling
    observed_count: np.ndarray  # int64 per column
    degenerate: np.ndarray      # bool per column (count < 2 or zero variance)


@dataclass
class AssembledTensor:
    stays: list[str]
    values: np.ndarray         # (N, W, F) float64
    mask: np.ndarray           # (N, W, F) uint8, 1 = observed
    feature_names: list[str]
    n_dynamic: int
    n_static: int


def assemble(dynamic: WindowedDynamic, static: StaticMatrix) -> AssembledTensor:
    """Concatenate [dynamic | static-broadcast] along the feature axis."""
    if dynamic.stays != static.stays:
        raise TensorShape("dynamic and static stay orders differ")
    n, w, f_d = dynamic.values.shape
    f_s = static.values.shape[1]
    static_block = np.repeat(static.values[:, None, :], w, axis=1)
    values = np.concatenate([dynamic.values, static_block], axis=2)
    mask = build_mask(dynamic, static)
    return AssembledTensor(stays=list(dynamic.stays), values=values, mask=mask,
                           feature_names=list(dynamic.features) + list(static.columns),
                           n_dynamic=f_d, n_static=f_s)


def build_mask(dynamic: WindowedDynamic, static: StaticMatrix) -> np.ndarray:
    """(N, W, F) uint8 observation mask, computed before any imputation.

    Static columns replicate the per-stay observed flags across all windows.
    """
    if dynamic.values.shape[0] != static.values.shape[0]:
        raise TensorShape(
            f"dynamic has {dynamic.values.shape[0]} stays, static has {static.values.shape[0]}")
    w = dynamic.values.shape[1]
    static_mask = np.repeat(static.observed[:, None, :], w, axis=1)
    return np.concatenate([dynamic.observed, static_mask], axis=2).astype(np.uint8)


def fit_scaler(values: np.ndarray, mask: np.ndarray,
               feature_names: list[str]) -> ScalerParams:
    """Per-column mean/std over observed training cells (population std)."""
    f = values.shape[-1]
    flat = values.reshape(-1, f)
    flat_mask = mask.reshape(-1, f).astype(bool)
    counts = flat_mask.sum(axis=0).astype(np.int64)

    safe = np.where(flat_mask, flat, 0.0)
    sums = safe.sum(axis=0)
    mean = np.divide(sums, counts, out=np.zeros(f), where=counts > 0)
    sq = np.where(flat_mask, (flat - mean) ** 2, 0.0)
    var = np.divide(sq.sum(axis=0), counts, out=np.zeros(f), where=counts > 0)
    std = np.sqrt(var)
    degenerate = (counts < 2) | (std == 0.0)
    std = np.where(std == 0.0, 1.0, std)
    mean = np.where(counts > 0, mean, 0.0)
    return ScalerParams(feature_names=tuple(feature_names), mean=mean, std=std,
                        observed_count=counts, degenerate=degenerate)


def apply_scaler(values: np.ndarray, mask: np.ndarray, params: ScalerParams) -> np.ndarray:
    """z-score observed cells; missing cells pass through untouched."""
    if values.shape[-1] != len(params.mean):
        raise TensorShape(
            f"tensor has {values.shape[-1]} columns, scaler has {len(params.mean)}")
    scaled = (values - params.mean) / params.std
    return np.where(mask.astype(bool), scaled, values)


def train_scaled_medians(values: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Per-column lower median of observed (already scaled) training cells."""
    f = values.shape[-1]
    flat = values.reshape(-1, f)
    flat_mask = mask.reshape(-1, f).astype(bool)
    medians = np.zeros(f)
    for j in range(f):
        col = flat[flat_mask[:, j], j]
        if col.size:
            medians[j] = np.sort(col)[(col.size - 1) // 2]
    return medians


def impute(values: np.ndarray, mask: np.ndarray, n_dynamic: int,
           dynamic_strategy: str, train_medians: np.ndarray | None = None) -> np.ndarray:
    """Fill remaining NaNs after scaling; the mask is not modified.

    Dynamic block: zero (scaled zero = training mean), forward_fill along the
    window axis with zero for leading gaps, or the scaled training median.
    Static block: missing continuous cells get the training mean (zero after
    scaling); missing one-hot groups are already all-zero and stay that way.
    """
    out = values.copy()
    dyn = out[:, :, :n_dynamic]
    missing = np.isnan(dyn)
    if dynamic_strategy == "zero":
        dyn[missing] = 0.0
    elif dynamic_strategy == "forward_fill":
        for w in range(1, dyn.shape[1]):
            gap = np.isnan(dyn[:, w, :])
            dyn[:, w, :] = np.where(gap, dyn[:, w - 1, :], dyn[:, w, :])
        dyn[np.isnan(dyn)] = 0.0  # leading gaps
    elif dynamic_strategy == "median":
        if train_medians is None:
            raise ValueError("median imputation requires train medians")
        fill = np.broadcast_to(train_medians[:n_dynamic], dyn.shape)
        dyn[missing] = fill[missing]
    else:
        raise ValueError(f"unknown dynamic imputation strategy {dynamic_strategy!r}")
    out[:, :, :n_dynamic] = dyn

    static = out[:, :, n_dynamic:]
    static[np.isnan(static)] = 0.0
    out[:, :, n_dynamic:] = static
    if np.isnan(out).any():
        raise TensorShape("imputation left NaN cells behind")
    return out
