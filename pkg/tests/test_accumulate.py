"""The accumulator must behave like exact real-number summation: any
partition of the rows into chunks, any merge topology, same result."""

import math

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from survtensor.accumulate import HourlyAccumulator


def fold_all(values):
    acc = HourlyAccumulator()
    for v in values:
        acc.add("s", 0, "f", v)
    return acc


values_strategy = st.lists(
    st.floats(min_value=-1e9, max_value=1e9, allow_nan=False, allow_infinity=False),
    min_size=1, max_size=60,
)


@given(values_strategy)
@settings(max_examples=200, deadline=None)
def test_single_accumulator_matches_fsum(values):
    total, count = fold_all(values).finalize().entries[("s", 0, "f")]
    assert count == len(values)
    assert total == math.fsum(values)


@given(values_strategy, st.integers(min_value=1, max_value=7), st.randoms())
@settings(max_examples=200, deadline=None)
def test_partition_and_merge_order_is_irrelevant(values, n_parts, rnd):
    reference = fold_all(values).finalize().entries[("s", 0, "f")]

    parts = [[] for _ in range(n_parts)]
    for v in values:
        parts[rnd.randrange(n_parts)].append(v)
    accumulators = [fold_all(p) if p else HourlyAccumulator() for p in parts]
    rnd.shuffle(accumulators)
    merged = HourlyAccumulator()
    for acc in accumulators:
        merged.merge(acc)
    assert merged.finalize().entries[("s", 0, "f")] == reference


def test_keys_are_independent():
    acc = HourlyAccumulator()
    acc.add("a", 0, "hr", 60.0)
    acc.add("a", 0, "hr", 80.0)
    acc.add("a", 1, "hr", 99.0)
    acc.add("b", 0, "hr", 50.0)
    agg = acc.finalize()
    assert agg.entries[("a", 0, "hr")] == (140.0, 2)
    assert agg.mean("a", 0, "hr") == 70.0
    assert agg.entries[("a", 1, "hr")] == (99.0, 1)
    assert agg.entries[("b", 0, "hr")] == (50.0, 1)


def test_pathological_cancellation_is_exact():
    # Alternating huge/tiny values defeat naive float accumulation.
    values = [1e16, 1.0, -1e16, 1.0] * 25
    total, count = fold_all(values).finalize().entries[("s", 0, "f")]
    assert total == 50.0 and count == 100

    rng = np.random.default_rng(0)
    order = rng.permutation(len(values))
    shuffled = [values[i] for i in order]
    assert fold_all(shuffled).finalize().entries[("s", 0, "f")] == (50.0, 100)
