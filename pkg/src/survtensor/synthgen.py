"""Deterministic synthetic raw-CSV generator for the three dataset schemas.

Emits schema-compatible CSV trees plus a ground-truth manifest (JSON) that
records, per stay, the true duration, true event code, and every measurement
written, so downstream stages can be checked against brute-force oracles.
Fully deterministic given the seed; no attempt at clinical realism.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from pathlib import Path

import numpy as np
import yaml

from . import schema
from .config import DATASET_DEFAULTS, DATASETS
from .errors import SpecInvalid

# Measurements are emitted for the first full hours of each stay, capped so
# long stays stay cheap; the cap exceeds every dataset's observation window
# so the out-of-window filter is exercised.
MEASUREMENT_SPAN_HOURS = 48

BASE_INTIME = datetime(2140, 1, 1, 0, 0, 0)

_ETHNICITIES = ["Caucasian", "African American", "Hispanic", "Asian", "Pacific Islander"]
_ETHNICITY_WEIGHTS = [0.52, 0.22, 0.15, 0.103, 0.007]  # last one is rare on purpose
_ADMISSION_TYPES = ["EMERGENCY", "ELECTIVE", "URGENT"]
_UNIT_TYPES = ["MICU", "SICU", "CCU", "Med-Surg ICU"]
_ACUITIES = ["1", "2", "3", "4", "5"]

_ICD_UNIVERSE = [
    "I10", "E11.9", "J96.00", "N17.9", "A41.9", "I50.9", "J18.9", "K92.2",
    "N39.0", "E87.1", "I21.4", "J44.1", "G93.40", "R65.21", "D64.9", "E86.0",
    "I48.91", "N18.3", "F05", "R57.0", "428.0", "401.9", "584.9", "038.9",
    "486", "599.0", "276.2", "518.81", "585.9", "410.71", "272.4", "250.00",
    "427.31", "285.9", "995.92", "507.0", "403.90", "780.97", "305.1", "244.9",
]


@dataclass(frozen=True)
class FeatureSpec:
    name: str
    rate_per_hour: float
    missing_prob: float
    mean: float
    sd: float


DEFAULT_FEATURES: dict[str, tuple[FeatureSpec, ...]] = {
    "eicu": (
        FeatureSpec("heart_rate", 2.0, 0.05, 85.0, 15.0),
        FeatureSpec("spo2", 2.0, 0.05, 96.5, 2.5),
        FeatureSpec("resp_rate", 2.0, 0.08, 18.0, 5.0),
        FeatureSpec("temperature", 0.5, 0.30, 37.0, 0.7),
        FeatureSpec("nibp_systolic", 1.0, 0.15, 120.0, 18.0),
        FeatureSpec("nibp_diastolic", 1.0, 0.15, 70.0, 12.0),
        FeatureSpec("glucose", 0.2, 0.40, 135.0, 40.0),
        FeatureSpec("lactate", 0.1, 0.60, 2.1, 1.2),
        FeatureSpec("creatinine", 0.15, 0.50, 1.2, 0.6),
    ),
    "mimiciv": (
        FeatureSpec("heart_rate", 2.0, 0.05, 85.0, 15.0),
        FeatureSpec("sbp", 1.0, 0.10, 120.0, 18.0),
        FeatureSpec("dbp", 1.0, 0.10, 70.0, 12.0),
        FeatureSpec("resp_rate", 2.0, 0.08, 18.0, 5.0),
        FeatureSpec("spo2", 2.0, 0.05, 96.5, 2.5),
        FeatureSpec("temperature", 0.5, 0.30, 37.0, 0.7),
        FeatureSpec("glucose", 0.2, 0.40, 135.0, 40.0),
        FeatureSpec("creatinine", 0.15, 0.50, 1.2, 0.6),
        FeatureSpec("sodium", 0.15, 0.50, 139.0, 4.0),
        FeatureSpec("potassium", 0.15, 0.50, 4.1, 0.5),
    ),
    "mcmed": (
        FeatureSpec("heart_rate", 6.0, 0.05, 88.0, 16.0),
        FeatureSpec("spo2", 6.0, 0.05, 96.0, 3.0),
        FeatureSpec("resp_rate", 6.0, 0.08, 18.0, 5.0),
        FeatureSpec("sbp", 2.0, 0.15, 125.0, 20.0),
        FeatureSpec("lactate", 0.3, 0.50, 2.0, 1.1),
        FeatureSpec("wbc", 0.2, 0.50, 9.5, 3.5),
        FeatureSpec("glucose", 0.3, 0.40, 130.0, 38.0),
    ),
}

_DEFAULT_MEAN_DURATION = {"mimiciv": 90.0, "eicu": 90.0, "mcmed": 8.0}
_DEFAULT_MIX = (0.25, 0.15, 0.06, 0.02)


@dataclass(frozen=True)
class SyntheticSpec:
    """Generating parameters; the ground truth every oracle compares against."""

    dataset_name: str
    n_patients: int = 100
    stays_per_patient: tuple[int, int] = (1, 2)
    event_rate: float = 0.12
    mean_duration_hours: float = 0.0  # 0 -> dataset default
    features: tuple[FeatureSpec, ...] = ()
    competing_risk_mix: tuple[float, ...] | None = None
    seed: int = 0

    def effective_features(self) -> tuple[FeatureSpec, ...]:
        return self.features if self.features else DEFAULT_FEATURES[self.dataset_name]

    def effective_mean_duration(self) -> float:
        if self.mean_duration_hours > 0:
            return self.mean_duration_hours
        return _DEFAULT_MEAN_DURATION[self.dataset_name]

    def effective_mix(self) -> tuple[float, ...] | None:
        if self.dataset_name != "mcmed":
            return None
        return self.competing_risk_mix if self.competing_risk_mix is not None else _DEFAULT_MIX

    def validate(self) -> None:
        if self.dataset_name not in DATASETS:
            raise SpecInvalid(f"dataset_name must be one of {DATASETS}, got {self.dataset_name!r}")
        if self.n_patients < 1:
            raise SpecInvalid("n_patients must be >= 1")
        lo, hi = self.stays_per_patient
        if not (1 <= lo <= hi):
            raise SpecInvalid(f"stays_per_patient must satisfy 1 <= min <= max, got ({lo}, {hi})")
        if not 0.0 <= self.event_rate <= 1.0:
            raise SpecInvalid("event_rate must lie in [0, 1]")
        if self.mean_duration_hours < 0:
            raise SpecInvalid("mean_duration_hours must be positive")
        if self.competing_risk_mix is not None and self.dataset_name != "mcmed":
            raise SpecInvalid("competing_risk_mix is only valid for mcmed")
        mix = self.effective_mix()
        if mix is not None:
            if len(mix) != 4:
                raise SpecInvalid("competing_risk_mix must have 4 entries")
            if any(p < 0 for p in mix) or sum(mix) > 1.0 + 1e-12:
                raise SpecInvalid("competing_risk_mix entries must be nonnegative and sum to <= 1")
        for feat in self.effective_features():
            if not 0.0 <= feat.missing_prob <= 1.0:
                raise SpecInvalid(f"missing_prob for {feat.name!r} must lie in [0, 1]")
            if feat.rate_per_hour < 0:
                raise SpecInvalid(f"rate_per_hour for {feat.name!r} must be >= 0")
            if feat.sd < 0:
                raise SpecInvalid(f"sd for {feat.name!r} must be >= 0")
        if self.dataset_name == "mimiciv":
            known = set(schema.item_name_to_id())
            for feat in self.effective_features():
                if feat.name not in known:
                    raise SpecInvalid(
                        f"mimiciv feature {feat.name!r} is not in the bundled item dictionary")


def load_spec(path) -> SyntheticSpec:
    """Parse a synthetic-spec YAML file."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            raw = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise SpecInvalid(f"cannot parse spec {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise SpecInvalid(f"spec {path} must be a YAML mapping")
    known = {"dataset_name", "n_patients", "stays_per_patient", "event_rate",
             "mean_duration_hours", "features", "competing_risk_mix", "seed"}
    for key in raw:
        if key not in known:
            raise SpecInvalid(f"unknown spec key {key!r}")
    if "dataset_name" not in raw:
        raise SpecInvalid("spec is missing dataset_name")
    features: tuple[FeatureSpec, ...] = ()
    if raw.get("features"):
        features = tuple(
            FeatureSpec(f["name"], float(f["rate_per_hour"]),
                        float(f["missing_prob"]), float(f["mean"]), float(f["sd"]))
            for f in raw["features"]
        )
    spp = raw.get("stays_per_patient", (1, 2))
    mix = raw.get("competing_risk_mix")
    spec = SyntheticSpec(
        dataset_name=raw["dataset_name"],
        n_patients=int(raw.get("n_patients", 100)),
        stays_per_patient=(int(spp[0]), int(spp[1])),
        event_rate=float(raw.get("event_rate", 0.12)),
        mean_duration_hours=float(raw.get("mean_duration_hours", 0.0)),
        features=features,
        competing_risk_mix=tuple(float(p) for p in mix) if mix is not None else None,
        seed=int(raw.get("seed", 0)),
    )
    spec.validate()
    return spec


@dataclass
class _Stay:
    subject_id: str
    stay_id: str
    hadm_id: str
    age_raw: str
    age_years: float | None
    gender: str
    ethnicity: str
    admission_kind: str
    duration_hours: float
    duration_minutes: int
    duration_seconds: int
    event: int
    icd_codes: list[str]
    eligible: bool
    intime: datetime
    measurements: list[tuple[int, int, float]] = field(default_factory=list)


def _sample_age(rng: np.random.Generator) -> str:
    u = rng.random()
    if u < 0.06:
        return str(int(rng.integers(15, 18)))         # filtered: minor
    if u < 0.10:
        return rng.choice(["> 89", "greater than 89"])  # HIPAA-converted to 90
    if u < 0.12:
        return "unknown"                               # filtered: non-numeric
    if u < 0.14:
        return str(int(rng.integers(90, 96)))          # numeric, capped to 90
    return str(int(rng.integers(18, 90)))


def _sample_event(spec: SyntheticSpec, rng: np.random.Generator) -> int:
    mix = spec.effective_mix()
    if mix is None:
        return 1 if rng.random() < spec.event_rate else 0
    u = rng.random()
    cum = 0.0
    for code, p in enumerate(mix, start=1):
        cum += p
        if u < cum:
            return code
    return 0


def _sample_population(spec: SyntheticSpec, rng: np.random.Generator) -> list[_Stay]:
    """Phase 1: patients, stays, outcomes. Measurement sampling comes after,
    so callers that only need the population consume an identical stream."""
    dataset = spec.dataset_name
    cap_hours = 5.0 * DATASET_DEFAULTS[dataset]["max_horizon_hours"]
    min_stay = DATASET_DEFAULTS[dataset]["min_stay_hours"]
    mean_duration = spec.effective_mean_duration()
    lo, hi = spec.stays_per_patient

    stays: list[_Stay] = []
    stay_counter = 0
    for p in range(spec.n_patients):
        subject_id = f"P{p + 1:05d}"
        n_stays = int(rng.integers(lo, hi + 1))
        age_raw = _sample_age(rng)
        age_years = schema.parse_age(age_raw)
        gender = str(rng.choice(["F", "M"]))
        ethnicity = str(rng.choice(_ETHNICITIES, p=_ETHNICITY_WEIGHTS))
        for _ in range(n_stays):
            stay_counter += 1
            stay_id = f"S{stay_counter:06d}"
            hadm_id = f"H{stay_counter:06d}"
            if dataset == "mimiciv":
                kind = str(rng.choice(_ADMISSION_TYPES))
            elif dataset == "eicu":
                kind = str(rng.choice(_UNIT_TYPES))
            else:
                kind = str(rng.choice(_ACUITIES))
            raw_duration = min(float(rng.exponential(mean_duration)), cap_hours)
            if dataset == "mimiciv":
                seconds = max(1, round(raw_duration * 3600.0))
                minutes = round(seconds / 60)
                duration = seconds / 3600.0
            else:
                minutes = max(1, round(raw_duration * 60.0))
                seconds = minutes * 60
                duration = minutes / 60.0
            event = _sample_event(spec, rng)
            n_codes = min(int(rng.poisson(3.0)), 8)
            codes = sorted(rng.choice(_ICD_UNIVERSE, size=n_codes, replace=False).tolist()) if n_codes else []
            eligible = (age_years is not None and age_years >= 18.0
                        and duration >= min_stay)
            stays.append(_Stay(
                subject_id=subject_id, stay_id=stay_id, hadm_id=hadm_id,
                age_raw=age_raw, age_years=age_years, gender=gender,
                ethnicity=ethnicity, admission_kind=kind,
                duration_hours=duration, duration_minutes=minutes,
                duration_seconds=seconds, event=event, icd_codes=codes,
                eligible=eligible,
                intime=BASE_INTIME + timedelta(hours=73 * stay_counter),
            ))
    return stays


def _sample_measurements(spec: SyntheticSpec, stays: list[_Stay],
                         rng: np.random.Generator) -> None:
    """Phase 2: per (stay, feature, hour) Poisson sampling with per-sample
    thinning; missing_prob = 1 yields exactly zero rows for the feature."""
    features = spec.effective_features()
    negative_offsets = spec.dataset_name == "eicu"
    for stay in stays:
        full_hours = int(min(stay.duration_hours, MEASUREMENT_SPAN_HOURS))
        for fidx, feat in enumerate(features):
            for hour in range(full_hours):
                k = int(rng.poisson(feat.rate_per_hour))
                for _ in range(k):
                    keep = rng.random() >= feat.missing_prob
                    minute = int(rng.integers(0, 60))
                    value = float(rng.normal(feat.mean, feat.sd))
                    if keep:
                        stay.measurements.append((fidx, hour * 60 + minute, value))
        if negative_offsets and full_hours > 0 and rng.random() < 0.10 and features:
            # Pre-admission observation row; exercises the nonnegative-offset filter.
            fidx = int(rng.integers(0, len(features)))
            offset = -int(rng.integers(1, 120))
            keep = rng.random() >= features[fidx].missing_prob
            value = float(rng.normal(features[fidx].mean, features[fidx].sd))
            if keep:
                stay.measurements.append((fidx, offset, value))


def _write_csv(path: Path, header: list[str], rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _fmt(value: float) -> str:
    return str(float(value))


def _timestamp(base: datetime, offset_minutes: int) -> str:
    return (base + timedelta(minutes=offset_minutes)).strftime("%Y-%m-%d %H:%M:%S")


def _write_mimiciv(spec: SyntheticSpec, stays: list[_Stay], out: Path,
                   rng: np.random.Generator) -> None:
    features = spec.effective_features()
    name_to_id = schema.item_name_to_id()
    tables = {feat.name: schema.item_table(feat.name) for feat in features}

    _write_csv(out / "icu" / "icustays.csv",
               ["subject_id", "hadm_id", "stay_id", "intime", "outtime"],
               [[s.subject_id, s.hadm_id, s.stay_id,
                 s.intime.strftime("%Y-%m-%d %H:%M:%S"),
                 (s.intime + timedelta(seconds=s.duration_seconds)).strftime("%Y-%m-%d %H:%M:%S")]
                for s in stays])

    seen_subjects = set()
    patient_rows = []
    for s in stays:
        if s.subject_id in seen_subjects:
            continue
        seen_subjects.add(s.subject_id)
        patient_rows.append([s.subject_id, s.gender, s.age_raw])
    _write_csv(out / "hosp" / "patients.csv",
               ["subject_id", "gender", "anchor_age"], patient_rows)

    def discharge_string(event: int) -> str:
        if event == 1:
            return str(rng.choice(["EXPIRED", "Expired", "expired"]))
        return str(rng.choice(["HOME", "Home", "SNF", "REHAB",
                               "Skilled Nursing Facility", "Home Health Care"]))

    _write_csv(out / "hosp" / "admissions.csv",
               ["subject_id", "hadm_id", "admittime", "admission_type",
                "ethnicity", "discharge_location"],
               [[s.subject_id, s.hadm_id,
                 (s.intime - timedelta(hours=2)).strftime("%Y-%m-%d %H:%M:%S"),
                 s.admission_kind, s.ethnicity, discharge_string(s.event)]
                for s in stays])

    chart_rows, lab_rows = [], []
    for s in stays:
        for fidx, offset, value in s.measurements:
            name = features[fidx].name
            itemid = name_to_id[name]
            row_time = _timestamp(s.intime, offset)
            if tables[name] == "chart":
                chart_rows.append([s.subject_id, s.stay_id, row_time, itemid, _fmt(value)])
            else:
                lab_rows.append([s.subject_id, s.hadm_id, row_time, itemid, _fmt(value)])
    _write_csv(out / "icu" / "chartevents.csv",
               ["subject_id", "stay_id", "charttime", "itemid", "valuenum"], chart_rows)
    _write_csv(out / "hosp" / "labevents.csv",
               ["subject_id", "hadm_id", "charttime", "itemid", "valuenum"], lab_rows)

    diag_rows = []
    for s in stays:
        for seq, code in enumerate(s.icd_codes, start=1):
            version = 10 if code[0].isalpha() else 9
            diag_rows.append([s.subject_id, s.hadm_id, seq, code, version])
    _write_csv(out / "hosp" / "diagnoses_icd.csv",
               ["subject_id", "hadm_id", "seq_num", "icd_code", "icd_version"], diag_rows)


def _write_eicu(spec: SyntheticSpec, stays: list[_Stay], out: Path,
                rng: np.random.Generator) -> None:
    features = spec.effective_features()
    periodic_by_name = {v: k for k, v in schema.EICU_PERIODIC_COLUMNS.items()}
    aperiodic_by_name = {v: k for k, v in schema.EICU_APERIODIC_COLUMNS.items()}

    def status_string(event: int) -> str:
        if event == 1:
            return str(rng.choice(["Expired", "EXPIRED"]))
        return str(rng.choice(["Alive", "ALIVE", "alive"]))

    _write_csv(out / "patient.csv",
               ["patientunitstayid", "patienthealthsystemstayid", "gender", "age",
                "ethnicity", "unittype", "unitdischargeoffset", "hospitaldischargestatus"],
               [[s.stay_id, s.subject_id, s.gender, s.age_raw, s.ethnicity,
                 s.admission_kind, s.duration_minutes, status_string(s.event)]
                for s in stays])

    periodic_cols = list(schema.EICU_PERIODIC_COLUMNS)
    aperiodic_cols = list(schema.EICU_APERIODIC_COLUMNS)
    periodic_rows, aperiodic_rows, lab_rows = [], [], []
    for s in stays:
        for fidx, offset, value in s.measurements:
            name = features[fidx].name
            if name in periodic_by_name:
                row = [s.stay_id, offset] + [""] * len(periodic_cols)
                row[2 + periodic_cols.index(periodic_by_name[name])] = _fmt(value)
                periodic_rows.append(row)
            elif name in aperiodic_by_name:
                row = [s.stay_id, offset] + [""] * len(aperiodic_cols)
                row[2 + aperiodic_cols.index(aperiodic_by_name[name])] = _fmt(value)
                aperiodic_rows.append(row)
            else:
                lab_rows.append([s.stay_id, offset, name, _fmt(value)])
    _write_csv(out / "vitalPeriodic.csv",
               ["patientunitstayid", "observationoffset"] + periodic_cols, periodic_rows)
    _write_csv(out / "vitalAperiodic.csv",
               ["patientunitstayid", "observationoffset"] + aperiodic_cols, aperiodic_rows)
    _write_csv(out / "lab.csv",
               ["patientunitstayid", "labresultoffset", "labname", "labresult"], lab_rows)


def _write_mcmed(spec: SyntheticSpec, stays: list[_Stay], out: Path,
                 rng: np.random.Generator) -> None:
    features = spec.effective_features()
    numeric_names = set(schema.MCMED_NUMERIC_FEATURES)

    def disposition_string(event: int) -> str:
        if event == 0:
            return str(rng.choice(["Observation", "OBSERVATION"]))
        label = {1: "Home", 2: "Ward", 3: "ICU", 4: "Death"}[event]
        return str(rng.choice([label, label.upper()]))

    _write_csv(out / "visits.csv",
               ["visit_id", "patient_id", "age", "gender", "ethnicity", "acuity",
                "los_minutes", "disposition"],
               [[s.stay_id, s.subject_id, s.age_raw, s.gender, s.ethnicity,
                 s.admission_kind, s.duration_minutes, disposition_string(s.event)]
                for s in stays])

    numeric_rows, lab_rows = [], []
    for s in stays:
        for fidx, offset, value in s.measurements:
            name = features[fidx].name
            target = numeric_rows if name in numeric_names else lab_rows
            target.append([s.stay_id, offset, name, _fmt(value)])
    _write_csv(out / "numerics.csv",
               ["visit_id", "offset_minutes", "measure", "value"], numeric_rows)
    _write_csv(out / "labs.csv",
               ["visit_id", "offset_minutes", "lab_name", "value"], lab_rows)
    _write_csv(out / "pmh.csv", ["visit_id", "icd_code"],
               [[s.stay_id, code] for s in stays for code in s.icd_codes])


def generate(spec: SyntheticSpec, out_dir) -> dict:
    """Write the synthetic CSV tree and ground-truth manifest; return the manifest.

    The manifest's measurement entries are in bijection with the measurement
    rows of the CSV files, and its duration/event values match the duration
    and outcome columns exactly.
    """
    spec.validate()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(spec.seed)
    stays = _sample_population(spec, rng)
    _sample_measurements(spec, stays, rng)

    writer = {"mimiciv": _write_mimiciv, "eicu": _write_eicu, "mcmed": _write_mcmed}
    writer[spec.dataset_name](spec, stays, out, rng)

    dataset = spec.dataset_name
    manifest = {
        "dataset": dataset,
        "seed": spec.seed,
        "n_patients": spec.n_patients,
        "n_stays": len(stays),
        "filters": {
            "min_age_years": 18,
            "min_stay_hours": DATASET_DEFAULTS[dataset]["min_stay_hours"],
        },
        "features": [f.name for f in spec.effective_features()],
        "stays": [
            {
                "stay_id": s.stay_id,
                "subject_id": s.subject_id,
                "age_raw": s.age_raw,
                "age_years": s.age_years,
                "gender": s.gender,
                "ethnicity": s.ethnicity,
                "admission_kind": s.admission_kind,
                "duration_hours": s.duration_hours,
                "event": s.event,
                "icd_codes": s.icd_codes,
                "eligible": s.eligible,
                "measurements": [[fidx, offset, value]
                                 for fidx, offset, value in s.measurements],
            }
            for s in stays
        ],
    }
    with open(out / "ground_truth.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=None, separators=(",", ":"))
    return manifest


def radiology_sidecar_path(out_path) -> Path:
    """Stay-id sidecar accompanying an embeddings matrix file."""
    p = Path(out_path)
    return p.with_name(p.stem + "_stays.json")


def emit_radiology_embeddings(spec: SyntheticSpec, dim: int, out_path) -> Path:
    """Write an N x dim embeddings matrix (npy) for the cohort-eligible stays.

    Row order matches the cohort order the ingest module will produce under
    the dataset's default filters; a stay-id sidecar records that order.
    """
    spec.validate()
    if not isinstance(dim, int) or dim < 1:
        raise SpecInvalid(f"embedding dim must be a positive integer, got {dim!r}")
    rng = np.random.default_rng(spec.seed)
    stays = _sample_population(spec, rng)
    eligible = [s.stay_id for s in stays if s.eligible]
    value_rng = np.random.default_rng([spec.seed, 7919])
    matrix = value_rng.standard_normal((len(eligible), dim)).astype(np.float32)

    from .npyio import write_npy  # local import: avoids a cycle at module load
    out = Path(out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_npy(matrix, "f32", out)
    with open(radiology_sidecar_path(out), "w", encoding="utf-8") as fh:
        json.dump({"stay_ids": eligible, "dim": dim}, fh, sort_keys=True)
    return out
