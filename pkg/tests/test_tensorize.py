import numpy as np
import pytest

from survtensor.errors import TensorShape
from survtensor.staticfeat import StaticMatrix
from survtensor.tensorize import (apply_scaler, assemble, build_mask, fit_scaler,
                                  impute, train_scaled_medians)
from survtensor.timeseries import WindowedDynamic


def dynamic_of(values):
    values = np.asarray(values, dtype=np.float64)
    n, w, f = values.shape
    return WindowedDynamic(stays=[f"s{i}" for i in range(n)], windows=w,
                           features=[f"dyn{j}" for j in range(f)],
                           values=values, observed=~np.isnan(values))


def static_of(values, observed=None, stays=None):
    values = np.asarray(values, dtype=np.float64)
    if observed is None:
        observed = ~np.isnan(values)
    return StaticMatrix(stays=stays or [f"s{i}" for i in range(values.shape[0])],
                        columns=[f"st{j}" for j in range(values.shape[1])],
                        values=values, observed=np.asarray(observed, dtype=bool),
                        groups={})


def test_mask_definition_and_broadcast():
    dyn = dynamic_of([[[1.0, np.nan], [np.nan, 2.0]]])
    static = static_of([[5.0, np.nan, 1.0]])
    mask = build_mask(dyn, static)
    assert mask.shape == (1, 2, 5)
    assert mask[0, :, :2].tolist() == [[1, 0], [0, 1]]
    assert mask[0, 0, 2:].tolist() == [1, 0, 1]
    assert mask[0, 1, 2:].tolist() == [1, 0, 1]  # static flags replicated per window
    assert mask.dtype == np.uint8


def test_mask_shape_mismatch():
    with pytest.raises(TensorShape):
        build_mask(dynamic_of(np.zeros((2, 1, 1))), static_of(np.zeros((3, 1))))


def test_assemble_blocks_and_broadcast_property():
    dyn = dynamic_of(np.arange(12, dtype=float).reshape(2, 3, 2))
    static = static_of([[70.0, 1.0, 0.0], [80.0, 0.0, 1.0]])
    tensor = assemble(dyn, static)
    assert tensor.values.shape == (2, 3, 5)
    assert tensor.feature_names == ["dyn0", "dyn1", "st0", "st1", "st2"]
    assert (tensor.n_dynamic, tensor.n_static) == (2, 3)
    for w in range(3):
        assert tensor.values[0, w, 2:].tolist() == [70.0, 1.0, 0.0]


def test_assemble_stay_order_mismatch():
    dyn = dynamic_of(np.zeros((2, 1, 1)))
    static = static_of(np.zeros((2, 1)), stays=["s1", "s0"])
    with pytest.raises(TensorShape):
        assemble(dyn, static)


def test_assemble_commutes_with_row_partition():
    rng = np.random.default_rng(5)
    values = rng.normal(size=(6, 2, 3))
    values[rng.random(values.shape) < 0.3] = np.nan
    dyn = dynamic_of(values)
    static = static_of(rng.normal(size=(6, 2)))
    whole = assemble(dyn, static)

    def rows(obj, sel):
        d = dynamic_of(values[sel])
        s = static_of(static.values[sel])
        return assemble(d, s)

    top, bottom = rows(None, slice(0, 3)), rows(None, slice(3, 6))
    stacked = np.concatenate([top.values, bottom.values], axis=0)
    assert np.array_equal(np.nan_to_num(stacked), np.nan_to_num(whole.values))
    assert np.array_equal(np.concatenate([top.mask, bottom.mask]), whole.mask)


def test_scaler_hand_moments():
    values = np.array([[[1.0], [2.0]], [[3.0], [np.nan]]])
    mask = (~np.isnan(values)).astype(np.uint8)
    params = fit_scaler(values, mask, ["f0"])
    assert params.mean[0] == 2.0
    assert params.observed_count[0] == 3
    assert params.std[0] == pytest.approx(np.sqrt(2.0 / 3.0), abs=1e-15)
    assert not params.degenerate[0]


def test_scaler_degeneracies():
    values = np.array([[[5.0, np.nan]], [[5.0, np.nan]]])
    mask = (~np.isnan(values)).astype(np.uint8)
    params = fit_scaler(values, mask, ["const", "empty"])
    assert params.std.tolist() == [1.0, 1.0]
    assert params.mean.tolist() == [5.0, 0.0]
    assert params.degenerate.tolist() == [True, True]


def test_apply_scaler_and_train_moments():
    rng = np.random.default_rng(9)
    values = rng.normal(7.0, 3.0, size=(40, 6, 4))
    values[rng.random(values.shape) < 0.2] = np.nan
    mask = (~np.isnan(values)).astype(np.uint8)
    params = fit_scaler(values, mask, [f"f{j}" for j in range(4)])
    scaled = apply_scaler(values, mask, params)
    assert np.array_equal(np.isnan(scaled), np.isnan(values))  # missing untouched
    flat, flat_mask = scaled.reshape(-1, 4), mask.reshape(-1, 4).astype(bool)
    for j in range(4):
        cells = flat[flat_mask[:, j], j]
        assert abs(cells.mean()) <= 1e-6
        assert abs(cells.std() - 1.0) <= 1e-6


def test_apply_scaler_simple_value_and_mismatch():
    values = np.array([[[3.0]]])
    mask = np.ones_like(values, dtype=np.uint8)
    params = fit_scaler(np.array([[[1.0], [3.0]]]), np.ones((1, 2, 1), np.uint8), ["f"])
    assert params.mean[0] == 2.0 and params.std[0] == 1.0
    assert apply_scaler(values, mask, params)[0, 0, 0] == 1.0
    with pytest.raises(TensorShape):
        apply_scaler(np.zeros((1, 1, 2)), np.ones((1, 1, 2), np.uint8), params)


def test_scale_round_trip():
    rng = np.random.default_rng(3)
    values = rng.normal(50.0, 9.0, size=(20, 4, 3))
    mask = np.ones_like(values, dtype=np.uint8)
    params = fit_scaler(values, mask, ["a", "b", "c"])
    back = apply_scaler(values, mask, params) * params.std + params.mean
    assert np.allclose(back, values, atol=1e-9, rtol=0)


def test_impute_zero_keeps_mask():
    values = np.array([[[np.nan, 1.0]]])
    mask = np.array([[[0, 1]]], dtype=np.uint8)
    out = impute(values, mask, n_dynamic=2, dynamic_strategy="zero")
    assert out[0, 0, 0] == 0.0 and out[0, 0, 1] == 1.0
    assert mask[0, 0].tolist() == [0, 1]  # mask not rewritten


def test_impute_forward_fill_and_leading_gap():
    values = np.full((1, 3, 2), np.nan)
    values[0, 0, 0] = 1.5                       # observed first window
    mask = (~np.isnan(values)).astype(np.uint8)
    out = impute(values, mask, n_dynamic=2, dynamic_strategy="forward_fill")
    assert out[0, :, 0].tolist() == [1.5, 1.5, 1.5]
    assert out[0, :, 1].tolist() == [0.0, 0.0, 0.0]  # leading gaps become zero
    assert mask[0, :, 0].tolist() == [1, 0, 0]


def test_impute_median_uses_train_medians():
    train = np.array([[[1.0], [2.0], [5.0]]])
    train_mask = np.ones_like(train, dtype=np.uint8)
    medians = train_scaled_medians(train, train_mask)
    assert medians[0] == 2.0  # lower median
    values = np.array([[[np.nan], [7.0], [np.nan]]])
    mask = (~np.isnan(values)).astype(np.uint8)
    out = impute(values, mask, n_dynamic=1, dynamic_strategy="median", train_medians=medians)
    assert out[0, :, 0].tolist() == [2.0, 7.0, 2.0]


def test_impute_static_block_fills_zero():
    values = np.array([[[np.nan, np.nan]]])
    mask = np.zeros_like(values, dtype=np.uint8)
    out = impute(values, mask, n_dynamic=1, dynamic_strategy="zero")
    assert out[0, 0].tolist() == [0.0, 0.0]
    assert np.isfinite(out).all()
