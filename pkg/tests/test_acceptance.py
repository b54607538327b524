"""Acceptance gate: one test per criterion, at the stated tolerance, printing
one pass/fail line each. Runtime limits are asserted where the criterion
states one (generation of synthetic inputs is setup, not counted)."""

import csv
import gc
import math
import shutil
import time
import tracemalloc
from math import fsum
from pathlib import Path

import numpy as np
import pytest

from survtensor.accumulate import HourlyAccumulator
from survtensor.artifacts import validate_outputs
from survtensor.ingest import CohortRecord, CohortTable, load_cohort, stream_hourly
from survtensor.labels import (SurvivalLabels, apply_grid, cumulative_incidence,
                               fit_grid, kaplan_meier, truncate_horizon)
from survtensor.npyio import npy_bytes, read_npy, write_npy
from survtensor.pipeline import run_preprocess
from survtensor.split import split_patients
from survtensor.synthgen import SyntheticSpec, generate
from survtensor.tensorize import apply_scaler, fit_scaler

from conftest import make_config


def report(name):
    print(f"ACCEPTANCE {name}: PASS")


def labels_of(durations, events, num_risks=1):
    return SurvivalLabels(stay_ids=tuple(f"s{i}" for i in range(len(durations))),
                          durations=np.asarray(durations, dtype=np.float64),
                          events=np.asarray(events, dtype=np.int64), num_risks=num_risks)


# ---------------------------------------------------------------------------
# 1. Horizon truncation property (exact, < 1 s)
# ---------------------------------------------------------------------------

def test_truncation_property():
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    for _ in range(10):
        n = 1000
        durations = rng.uniform(0.0, 600.0, n)
        events = rng.integers(0, 5, n)
        horizon = float(rng.uniform(1.0, 400.0))
        labels = labels_of(durations, events, num_risks=4)
        once = truncate_horizon(labels, horizon)
        assert np.array_equal(once.durations, np.minimum(durations, horizon))
        assert np.array_equal(once.events, events * (durations <= horizon))
        twice = truncate_horizon(once, horizon)
        assert np.array_equal(once.durations, twice.durations)
        assert np.array_equal(once.events, twice.events)
    elapsed = time.perf_counter() - start
    assert elapsed < 1.0, f"{elapsed:.2f}s"
    report("truncation-property")


# ---------------------------------------------------------------------------
# 2. Aggregation oracle on a 200-stay synthetic cohort (1e-9, < 30 s)
# ---------------------------------------------------------------------------

def test_aggregation_oracle(tmp_path):
    spec = SyntheticSpec(dataset_name="eicu", n_patients=200, stays_per_patient=(1, 2),
                         seed=515)
    manifest = generate(spec, tmp_path / "raw")
    cfg = make_config("eicu", tmp_path / "raw", tmp_path / "out")

    start = time.perf_counter()
    cohort = load_cohort(cfg)
    assert len(cohort) >= 200, f"cohort has only {len(cohort)} stays"
    hourly = stream_hourly(cfg, cohort)
    from survtensor.timeseries import windowise
    wd = windowise(hourly, cohort.stay_ids(), cfg)

    features = manifest["features"]
    per_cell = {}
    for stay in manifest["stays"]:
        if not stay["eligible"]:
            continue
        for fidx, offset, value in stay["measurements"]:
            if offset < 0 or offset >= cfg.max_hours * 60:
                continue
            per_cell.setdefault((stay["stay_id"], offset // 60, features[fidx]),
                                []).append(value)
    hourly_means = {key: fsum(vals) / len(vals) for key, vals in per_cell.items()}

    stay_index = {s: i for i, s in enumerate(cohort.stay_ids())}
    feat_index = {f: j for j, f in enumerate(wd.features)}
    expected = np.full_like(wd.values, np.nan)
    acc = {}
    for (stay, hour, feature), mean in hourly_means.items():
        key = (stay_index[stay], hour // cfg.window_size_hours, feat_index[feature])
        acc.setdefault(key, []).append((hour, mean))
    for (i, w, j), pairs in acc.items():
        ordered = [m for _, m in sorted(pairs)]
        expected[i, w, j] = fsum(ordered) / len(ordered)

    assert np.array_equal(np.isnan(expected), ~wd.observed)  # mask zeros == empty cells
    observed = wd.observed
    assert np.max(np.abs(wd.values[observed] - expected[observed])) <= 1e-9
    elapsed = time.perf_counter() - start
    assert elapsed < 30.0, f"{elapsed:.2f}s"
    report("aggregation-oracle")


# ---------------------------------------------------------------------------
# 3. Memory bound on a 1,000,000-row file (< 10x baseline, < 60 s)
# ---------------------------------------------------------------------------

def test_memory_bounded_streaming(tmp_path):
    rng = np.random.default_rng(99)
    n_stays, n_rows = 200, 1_000_000
    stays = [f"S{i:04d}" for i in range(n_stays)]

    with open(tmp_path / "patient.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["patientunitstayid", "patienthealthsystemstayid", "gender", "age",
                         "ethnicity", "unittype", "unitdischargeoffset",
                         "hospitaldischargestatus"])
        for i, stay in enumerate(stays):
            writer.writerow([stay, f"P{i:04d}", "F", "50", "Caucasian", "MICU", 2880, "Alive"])
    for name, header in (("vitalAperiodic.csv", ["patientunitstayid", "observationoffset",
                                                 "noninvasivesystolic", "noninvasivediastolic",
                                                 "noninvasivemean"]),
                         ("lab.csv", ["patientunitstayid", "labresultoffset", "labname",
                                      "labresult"])):
        with open(tmp_path / name, "w", newline="") as fh:
            csv.writer(fh).writerow(header)

    import pandas as pd
    frame = pd.DataFrame({
        "patientunitstayid": rng.choice(stays, n_rows),
        "observationoffset": rng.integers(0, 2880, n_rows),
        "heartrate": np.round(rng.normal(85.0, 15.0, n_rows), 4),
        "sao2": "",
        "respiration": "",
        "temperature": "",
    })
    frame.to_csv(tmp_path / "vitalPeriodic.csv", index=False)

    cfg = make_config("eicu", tmp_path, tmp_path / "out")
    cohort = load_cohort(cfg)

    start = time.perf_counter()

    def peak_ingest(chunk_rows):
        gc.collect()
        tracemalloc.start()
        agg = stream_hourly(cfg, cohort, chunk_rows=chunk_rows)
        _, peak = tracemalloc.get_traced_memory()
        tracemalloc.stop()
        return agg, peak

    baseline_agg, baseline_peak = peak_ingest(500_000)
    chunked_agg, chunked_peak = peak_ingest(50_000)
    assert chunked_peak < 10 * baseline_peak, (
        f"peak {chunked_peak / 1e6:.1f} MB vs baseline {baseline_peak / 1e6:.1f} MB")

    # Whole-file single-pass reference, independent of the accumulator.
    reference_cells = {}
    with open(tmp_path / "vitalPeriodic.csv", newline="") as fh:
        for row in csv.DictReader(fh):
            offset = int(row["observationoffset"])
            if not (0 <= offset < cfg.max_hours * 60):
                continue
            key = (row["patientunitstayid"], offset // 60, "heart_rate")
            reference_cells.setdefault(key, []).append(float(row["heartrate"]))
    reference = {key: (fsum(vals), len(vals)) for key, vals in reference_cells.items()}
    assert chunked_agg.entries == reference
    assert baseline_agg.entries == reference

    elapsed = time.perf_counter() - start
    assert elapsed < 60.0, f"{elapsed:.2f}s"
    report("memory-bound")


# ---------------------------------------------------------------------------
# 4. Split integrity over 100 random cohorts (exact, < 10 s)
# ---------------------------------------------------------------------------

def test_split_integrity():
    rng = np.random.default_rng(7)
    start = time.perf_counter()
    ratios = (0.70, 0.15, 0.15)
    for trial in range(100):
        n_subjects = int(rng.integers(7, 80))
        records = []
        for p in range(n_subjects):
            for s in range(int(rng.integers(1, 5))):
                records.append(CohortRecord(
                    subject_id=f"P{p:03d}", stay_id=f"t{trial}s{p}x{s}",
                    duration_hours=30.0, raw_outcome="Alive", age_years=50.0,
                    static_attributes={}))
        cohort = CohortTable(dataset="eicu", records=records)
        seed = int(rng.integers(0, 2 ** 31))
        assignment = split_patients(cohort, ratios, seed)

        splits_of = {}
        for record in records:
            splits_of.setdefault(record.subject_id, set()).add(
                assignment.by_stay[record.stay_id])
        assert all(len(s) == 1 for s in splits_of.values())  # no subject straddles

        expected_train = math.floor(ratios[0] * n_subjects)
        expected_val = math.floor(ratios[1] * n_subjects)
        assert assignment.counts["train"]["patients"] == expected_train
        assert assignment.counts["val"]["patients"] == expected_val
        assert assignment.counts["test"]["patients"] == (
            n_subjects - expected_train - expected_val)

        again = split_patients(cohort, ratios, seed)
        assert again.by_subject == assignment.by_subject
    elapsed = time.perf_counter() - start
    assert elapsed < 10.0, f"{elapsed:.2f}s"
    report("split-integrity")


# ---------------------------------------------------------------------------
# 5. Scaler moments (1e-6, < 5 s)
# ---------------------------------------------------------------------------

def test_scaler_moments():
    start = time.perf_counter()
    rng = np.random.default_rng(11)
    values = rng.normal(37.0, 12.0, size=(300, 6, 8))
    values[rng.random(values.shape) < 0.35] = np.nan
    values[:, :, 6] = 5.0          # constant column
    values[:, :, 7] = np.nan       # never observed
    mask = (~np.isnan(values)).astype(np.uint8)
    params = fit_scaler(values, mask, [f"f{j}" for j in range(8)])
    scaled = apply_scaler(values, mask, params)

    flat, flat_mask = scaled.reshape(-1, 8), mask.reshape(-1, 8).astype(bool)
    for j in range(6):
        cells = flat[flat_mask[:, j], j]
        assert cells.size >= 2
        assert abs(cells.mean()) <= 1e-6
        assert abs(cells.std() - 1.0) <= 1e-6
    assert params.std[6] == 1.0 and params.degenerate[6]
    assert params.std[7] == 1.0 and params.mean[7] == 0.0 and params.degenerate[7]
    elapsed = time.perf_counter() - start
    assert elapsed < 5.0, f"{elapsed:.2f}s"
    report("scaler-moments")


# ---------------------------------------------------------------------------
# 6. Discretisation grid (exact, < 5 s)
# ---------------------------------------------------------------------------

def test_discretisation():
    start = time.perf_counter()
    rng = np.random.default_rng(13)
    horizon = 240.0
    durations = np.minimum(rng.exponential(90.0, size=4000), horizon)
    labels = labels_of(durations, rng.integers(0, 2, 4000))
    grid = fit_grid(labels, 10, "quantile", horizon)
    assert grid.cuts[0] == 0.0 and grid.cuts[-1] == horizon  # endpoints exact
    assert np.all(np.diff(grid.cuts) > 0)

    probe = rng.uniform(0.0, horizon, size=10_000)
    bins = apply_grid(probe, grid)
    cuts = grid.cuts.tolist()
    n_bins = len(cuts) - 1
    for t, b in zip(probe, bins):
        if t == horizon:
            expected = n_bins
        else:
            expected = next(j for j in range(1, n_bins + 1) if cuts[j - 1] <= t < cuts[j])
        assert b == expected
    assert apply_grid(np.array([horizon]), grid)[0] == n_bins
    elapsed = time.perf_counter() - start
    assert elapsed < 5.0, f"{elapsed:.2f}s"
    report("discretisation")


# ---------------------------------------------------------------------------
# 7. Estimators: KM exact values, CIF conservation, two-state identity
# ---------------------------------------------------------------------------

def test_estimators(mcmed_tree):
    curve = kaplan_meier(labels_of([1.0, 2.0, 3.0, 4.0], [1, 0, 1, 0]))
    assert curve.times.tolist() == [1.0, 3.0]
    assert curve.survival[0] == 0.75 and curve.survival[1] == 0.375  # exact

    spec, root, manifest = mcmed_tree
    cfg = make_config("mcmed", root / "raw", root / "out_est")
    from survtensor.labels import extract_labels
    labels = truncate_horizon(extract_labels(load_cohort(cfg)), cfg.max_horizon_hours)
    curves = cumulative_incidence(labels)
    total = curves.survival + sum(curves.cif[k] for k in range(1, 5))
    assert np.max(np.abs(total - 1.0)) <= 1e-9

    rng = np.random.default_rng(17)
    single = labels_of(rng.uniform(1, 100, 500), rng.integers(0, 2, 500))
    km = kaplan_meier(single)
    cif = cumulative_incidence(single)
    assert np.max(np.abs(cif.cif[1] - (1.0 - km.survival))) <= 1e-12
    report("estimators")


# ---------------------------------------------------------------------------
# 8. Output contract: round trip, clean runs on all three schemas, faults
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def thousand_stay_runs(tmp_path_factory):
    """Full pipeline on ~1,000 generated stays per dataset."""
    runs = {}
    for dataset, seed in (("mimiciv", 41), ("eicu", 42), ("mcmed", 43)):
        root = tmp_path_factory.mktemp(f"accept_{dataset}")
        spec = SyntheticSpec(dataset_name=dataset, n_patients=667,
                             stays_per_patient=(1, 2), seed=seed)
        generate(spec, root / "raw")
        cfg = make_config(dataset, root / "raw", root / "out")
        start = time.perf_counter()
        result = run_preprocess(cfg)
        elapsed = time.perf_counter() - start
        runs[dataset] = (cfg, result, elapsed)
    return runs


def test_output_contract(thousand_stay_runs, tmp_path):
    rng = np.random.default_rng(3)
    array = rng.normal(size=(17, 6, 5)).astype(np.float32)
    path = write_npy(array, "f32", tmp_path / "probe.npy")
    assert read_npy(path).tobytes() == array.tobytes()
    assert npy_bytes(read_npy(path), "f32") == path.read_bytes()

    for dataset, (cfg, result, elapsed) in thousand_stay_runs.items():
        assert result.report.passed, f"{dataset}: {result.report.to_dict()}"
        assert elapsed < 120.0, f"{dataset} took {elapsed:.1f}s"

    cfg, result, _ = thousand_stay_runs["eicu"]
    horizon = float(cfg.max_horizon_hours)
    faults = {}
    for fault in ("mask", "duration", "truncate"):
        out = tmp_path / f"fault_{fault}"
        shutil.copytree(cfg.output_dir, out)
        faults[fault] = out
    mask = read_npy(faults["mask"] / "x_train_eicu_mask.npy")
    mask[0, 0, 0] = 2
    write_npy(mask, "u8", faults["mask"] / "x_train_eicu_mask.npy")
    durations = read_npy(faults["duration"] / "durations_train_eicu.npy").astype(np.float64)
    durations[0] = horizon + 1.0
    write_npy(durations, "f32", faults["duration"] / "durations_train_eicu.npy")
    target = faults["truncate"] / "x_test_eicu.npy"
    target.write_bytes(target.read_bytes()[:-64])

    for fault, out in faults.items():
        assert not validate_outputs(out).passed, f"fault {fault} not caught"
    report("output-contract")


# ---------------------------------------------------------------------------
# 9. Determinism across reruns and worker counts
# ---------------------------------------------------------------------------

def tree_digests(out_dir: Path) -> dict:
    import hashlib
    digests = {}
    for path in sorted(Path(out_dir).rglob("*")):
        if path.is_file():
            digests[str(path.relative_to(out_dir))] = hashlib.sha256(
                path.read_bytes()).hexdigest()
    return digests


def test_determinism_across_workers(tmp_path):
    from click.testing import CliRunner
    from survtensor.cli import main

    spec = SyntheticSpec(dataset_name="eicu", n_patients=120, seed=77)
    generate(spec, tmp_path / "raw")
    config_path = tmp_path / "run.yaml"
    config_path.write_text(
        f"dataset_name: eicu\nbase_dir: {tmp_path / 'raw'}\n"
        f"output_dir: {tmp_path / 'out'}\nseed: 5\n", encoding="utf-8")

    runner = CliRunner()
    snapshots = []
    for workers in ("1", "4", "1"):
        result = runner.invoke(main, ["preprocess", "--config", str(config_path),
                                      "--workers", workers])
        assert result.exit_code == 0, result.output
        snapshots.append(tree_digests(tmp_path / "out"))
    assert snapshots[0] == snapshots[1] == snapshots[2]
    report("determinism")
