"""Raw-CSV ingestion: cohort loading and bounded-memory hourly aggregation.

Each dataset adapter normalises its raw export into the same canonical
types (CohortTable, HourlyAggregate), so every downstream stage is
adapter-agnostic. Measurement files are streamed in fixed-size chunks and
folded into a (sum, count) accumulator; peak memory is bounded by the chunk
size plus the accumulator, never by file size.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from . import schema
from .accumulate import HourlyAccumulator, HourlyAggregate, IngestDiagnostics
from .config import PipelineConfig
from .errors import EmptyCohort, IngestMissingFile, IngestSchema

log = logging.getLogger("survtensor")


@dataclass(frozen=True)
class CohortRecord:
    subject_id: str
    stay_id: str
    duration_hours: float
    raw_outcome: str
    age_years: float
    static_attributes: dict[str, str]


@dataclass
class CohortTable:
    """Filtered cohort, one record per stay, in raw-file row order."""

    dataset: str
    records: list[CohortRecord]
    meta: dict[str, dict] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.records)

    def stay_ids(self) -> list[str]:
        return [r.stay_id for r in self.records]

    def subject_ids(self) -> list[str]:
        return [r.subject_id for r in self.records]

    def subset(self, stay_ids: set[str]) -> "CohortTable":
        kept = [r for r in self.records if r.stay_id in stay_ids]
        return CohortTable(dataset=self.dataset, records=kept,
                           meta={r.stay_id: self.meta[r.stay_id] for r in kept
                                 if r.stay_id in self.meta})


def resolve_file(base_dir, relative: str) -> Path:
    """Locate a raw file, accepting either .csv or .csv.gz."""
    base = Path(base_dir)
    for candidate in (base / relative, base / (relative + ".gz")):
        if candidate.is_file():
            return candidate
    raise IngestMissingFile(f"missing raw file {relative}[.gz] under {base}")


def _read_table(path: Path, required: tuple[str, ...]) -> pd.DataFrame:
    frame = pd.read_csv(path, dtype=str)
    for column in required:
        if column not in frame.columns:
            raise IngestSchema(f"{path.name}: required column {column!r} is absent")
    return frame


def _numeric(series: pd.Series) -> pd.Series:
    return pd.to_numeric(series, errors="coerce")


def _exact_floats(raw_list: list, idx) -> list[float]:
    # pandas' float parser can be a ulp off; values are re-parsed with
    # Python's correctly rounded float() so aggregates match ground truth
    # bit for bit.
    return [float(raw_list[i]) for i in idx]


# ---------------------------------------------------------------------------
# Cohort adapters
# ---------------------------------------------------------------------------

def _raw_cohort_mimiciv(cfg: PipelineConfig):
    stays = _read_table(resolve_file(cfg.base_dir, schema.DATASET_FILES["mimiciv"]["icustays"]),
                        ("subject_id", "hadm_id", "stay_id", "intime", "outtime"))
    admissions = _read_table(resolve_file(cfg.base_dir, schema.DATASET_FILES["mimiciv"]["admissions"]),
                             ("hadm_id", "admission_type", "ethnicity", "discharge_location"))
    patients = _read_table(resolve_file(cfg.base_dir, schema.DATASET_FILES["mimiciv"]["patients"]),
                           ("subject_id", "gender", "anchor_age"))

    adm = admissions.drop_duplicates("hadm_id").set_index("hadm_id")
    pat = patients.drop_duplicates("subject_id").set_index("subject_id")
    intimes = pd.to_datetime(stays["intime"], format="%Y-%m-%d %H:%M:%S", errors="coerce")
    outtimes = pd.to_datetime(stays["outtime"], format="%Y-%m-%d %H:%M:%S", errors="coerce")

    rows = []
    for i in range(len(stays)):
        subject = stays["subject_id"].iat[i]
        hadm = stays["hadm_id"].iat[i]
        stay = stays["stay_id"].iat[i]
        intime, outtime = intimes.iat[i], outtimes.iat[i]
        duration = float("nan")
        if pd.notna(intime) and pd.notna(outtime):
            duration = (outtime - intime).total_seconds() / 3600.0
        adm_row = adm.loc[hadm] if hadm in adm.index else None
        pat_row = pat.loc[subject] if subject in pat.index else None
        outcome = adm_row["discharge_location"] if adm_row is not None else None
        rows.append({
            "subject_id": subject,
            "stay_id": stay,
            "duration_hours": duration,
            "raw_outcome": outcome if pd.notna(outcome) else "",
            "age_raw": pat_row["anchor_age"] if pat_row is not None else None,
            "static": {
                "gender": _clean(pat_row["gender"]) if pat_row is not None else "",
                "ethnicity": _clean(adm_row["ethnicity"]) if adm_row is not None else "",
                "admission_type": _clean(adm_row["admission_type"]) if adm_row is not None else "",
            },
            "meta": {"intime": intime, "hadm_id": hadm},
        })
    return rows


def _raw_cohort_eicu(cfg: PipelineConfig):
    patient = _read_table(resolve_file(cfg.base_dir, schema.DATASET_FILES["eicu"]["patient"]),
                          ("patientunitstayid", "patienthealthsystemstayid", "gender", "age",
                           "ethnicity", "unittype", "unitdischargeoffset", "hospitaldischargestatus"))
    offsets = _numeric(patient["unitdischargeoffset"])
    rows = []
    for i in range(len(patient)):
        offset = offsets.iat[i]
        rows.append({
            "subject_id": patient["patienthealthsystemstayid"].iat[i],
            "stay_id": patient["patientunitstayid"].iat[i],
            "duration_hours": float(offset) / 60.0 if pd.notna(offset) else float("nan"),
            "raw_outcome": _clean(patient["hospitaldischargestatus"].iat[i]),
            "age_raw": patient["age"].iat[i],
            "static": {
                "gender": _clean(patient["gender"].iat[i]),
                "ethnicity": _clean(patient["ethnicity"].iat[i]),
                "unit_type": _clean(patient["unittype"].iat[i]),
            },
            "meta": {},
        })
    return rows


def _raw_cohort_mcmed(cfg: PipelineConfig):
    visits = _read_table(resolve_file(cfg.base_dir, schema.DATASET_FILES["mcmed"]["visits"]),
                         ("visit_id", "patient_id", "age", "gender", "ethnicity",
                          "acuity", "los_minutes", "disposition"))
    minutes = _numeric(visits["los_minutes"])
    rows = []
    for i in range(len(visits)):
        los = minutes.iat[i]
        rows.append({
            "subject_id": visits["patient_id"].iat[i],
            "stay_id": visits["visit_id"].iat[i],
            "duration_hours": float(los) / 60.0 if pd.notna(los) else float("nan"),
            "raw_outcome": _clean(visits["disposition"].iat[i]),
            "age_raw": visits["age"].iat[i],
            "static": {
                "gender": _clean(visits["gender"].iat[i]),
                "ethnicity": _clean(visits["ethnicity"].iat[i]),
                "acuity": _clean(visits["acuity"].iat[i]),
            },
            "meta": {},
        })
    return rows


def _clean(value) -> str:
    if value is None or (isinstance(value, float) and np.isnan(value)):
        return ""
    text = str(value).strip()
    return "" if text.lower() == "nan" else text


_RAW_COHORT = {"mimiciv": _raw_cohort_mimiciv, "eicu": _raw_cohort_eicu, "mcmed": _raw_cohort_mcmed}


def load_cohort(cfg: PipelineConfig) -> CohortTable:
    """Load and filter the cohort for the configured dataset.

    Filters, in order: (1) age (non-numeric or below min_age_years removed,
    "greater than 89"-style entries become 90), (2) minimum stay duration,
    (3) outcome completeness (unknown/blank outcome strings removed).
    """
    rows = _RAW_COHORT[cfg.dataset_name](cfg)
    n_raw = len(rows)

    kept = []
    for row in rows:
        age = schema.parse_age(row["age_raw"])
        if age is None or age < cfg.min_age_years:
            continue
        duration = row["duration_hours"]
        if not (duration >= cfg.min_stay_hours):  # NaN fails the comparison
            continue
        if schema.outcome_code(cfg.dataset_name, row["raw_outcome"]) is None:
            continue
        row["age_years"] = age
        kept.append(row)

    if not kept:
        raise EmptyCohort(
            f"no stays survive the cohort filters ({n_raw} raw rows for {cfg.dataset_name})")

    records, meta, seen = [], {}, set()
    for row in kept:
        if not row["subject_id"] or _clean(row["subject_id"]) == "":
            raise IngestSchema(f"stay {row['stay_id']!r} has an empty subject id")
        if row["stay_id"] in seen:
            raise IngestSchema(f"duplicate stay_id {row['stay_id']!r} in cohort")
        seen.add(row["stay_id"])
        records.append(CohortRecord(
            subject_id=row["subject_id"],
            stay_id=row["stay_id"],
            duration_hours=float(row["duration_hours"]),
            raw_outcome=row["raw_outcome"],
            age_years=float(row["age_years"]),
            static_attributes=row["static"],
        ))
        meta[row["stay_id"]] = row["meta"]

    log.info("stage=cohort dataset=%s raw_rows=%d kept_stays=%d",
             cfg.dataset_name, n_raw, len(records))
    return CohortTable(dataset=cfg.dataset_name, records=records, meta=meta)


def load_diagnoses(cfg: PipelineConfig, cohort: CohortTable) -> dict[str, list[str]]:
    """Diagnosis code lists per stay (for the ICD modality)."""
    if cfg.dataset_name == "eicu":
        raise IngestMissingFile("the eicu schema has no diagnosis source for the icd modality")
    codes: dict[str, list[str]] = {r.stay_id: [] for r in cohort.records}
    if cfg.dataset_name == "mimiciv":
        path = resolve_file(cfg.base_dir, schema.DATASET_FILES["mimiciv"]["diagnoses"])
        frame = _read_table(path, ("hadm_id", "icd_code"))
        hadm_to_stay = {m["hadm_id"]: stay for stay, m in cohort.meta.items() if m.get("hadm_id")}
        for hadm, code in zip(frame["hadm_id"], frame["icd_code"]):
            stay = hadm_to_stay.get(hadm)
            if stay is not None and pd.notna(code):
                codes[stay].append(str(code))
    else:
        path = resolve_file(cfg.base_dir, schema.DATASET_FILES["mcmed"]["pmh"])
        frame = _read_table(path, ("visit_id", "icd_code"))
        for visit, code in zip(frame["visit_id"], frame["icd_code"]):
            if visit in codes and pd.notna(code):
                codes[visit].append(str(code))
    return codes


# ---------------------------------------------------------------------------
# Streaming hourly aggregation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class _WideSource:
    """A measurement file with one value column per feature."""
    file_key: str
    id_column: str
    offset_column: str
    columns: dict[str, str]  # raw column -> canonical feature name


@dataclass(frozen=True)
class _LongSource:
    """A measurement file with (name, value) rows."""
    file_key: str
    id_column: str
    offset_column: str
    name_column: str
    value_column: str


@dataclass(frozen=True)
class _EventSource:
    """A timestamped, item-id keyed file (chart/lab events)."""
    file_key: str
    id_column: str
    time_column: str
    item_column: str
    value_column: str
    table: str  # "chart" or "lab" section of the bundled dictionary


_SOURCES = {
    "eicu": (
        _WideSource("vitalPeriodic", "patientunitstayid", "observationoffset",
                    schema.EICU_PERIODIC_COLUMNS),
        _WideSource("vitalAperiodic", "patientunitstayid", "observationoffset",
                    schema.EICU_APERIODIC_COLUMNS),
        _LongSource("lab", "patientunitstayid", "labresultoffset", "labname", "labresult"),
    ),
    "mimiciv": (
        _EventSource("chartevents", "stay_id", "charttime", "itemid", "valuenum", "chart"),
        _EventSource("labevents", "hadm_id", "charttime", "itemid", "valuenum", "lab"),
    ),
    "mcmed": (
        _LongSource("numerics", "visit_id", "offset_minutes", "measure", "value"),
        _LongSource("labs", "visit_id", "offset_minutes", "lab_name", "value"),
    ),
}


def _fold_values(acc: HourlyAccumulator, stays: list, hours: list, values: list,
                 feature: str) -> None:
    add = acc.add
    for stay, hour, value in zip(stays, hours, values):
        add(stay, hour, feature, value)


def _chunk_minutes_context(chunk: pd.DataFrame, source, cohort_stays: set[str],
                           max_hours: int, diag: IngestDiagnostics,
                           stay_series: pd.Series):
    """Shared offset handling for minute-offset sources. Returns a boolean
    row mask of usable rows plus the integer hour per row."""
    offsets_raw = chunk[source.offset_column]
    offsets = _numeric(offsets_raw)
    in_cohort = stay_series.isin(cohort_stays).to_numpy()
    diag.rows_not_in_cohort += int((~in_cohort).sum())

    off_bad = (offsets.isna() & offsets_raw.notna()).to_numpy()
    diag.rows_malformed += int((off_bad & in_cohort).sum())

    off = offsets.to_numpy(dtype=np.float64)
    with np.errstate(invalid="ignore"):
        in_window = (off >= 0) & (off < max_hours * 60)
    diag.rows_out_of_window += int((in_cohort & ~off_bad & ~in_window & ~np.isnan(off)).sum())

    usable = in_cohort & in_window & ~np.isnan(off)
    hours = np.floor_divide(off, 60.0, where=usable, out=np.zeros_like(off))
    return usable, hours.astype(np.int64)


def _fold_wide_chunk(chunk: pd.DataFrame, source: _WideSource, cohort_stays: set[str],
                     max_hours: int) -> tuple[HourlyAccumulator, IngestDiagnostics]:
    acc, diag = HourlyAccumulator(), IngestDiagnostics()
    diag.rows_seen += len(chunk)
    stay_series = chunk[source.id_column]
    usable, hours = _chunk_minutes_context(chunk, source, cohort_stays, max_hours,
                                           diag, stay_series)
    stay_list = stay_series.tolist()
    hour_list = hours.tolist()
    for column, feature in source.columns.items():
        if column not in chunk.columns:
            continue
        raw = chunk[column]
        parsed = _numeric(raw)
        values = parsed.to_numpy(dtype=np.float64)
        bad = (parsed.isna() & raw.notna()).to_numpy()
        diag.rows_malformed += int((bad & usable).sum())
        sel = usable & ~np.isnan(values) & np.isfinite(values)
        idx = np.flatnonzero(sel)
        diag.rows_folded += len(idx)
        _fold_values(acc,
                     [stay_list[i] for i in idx],
                     [hour_list[i] for i in idx],
                     _exact_floats(raw.tolist(), idx), feature)
    return acc, diag


def _fold_long_chunk(chunk: pd.DataFrame, source: _LongSource, cohort_stays: set[str],
                     max_hours: int) -> tuple[HourlyAccumulator, IngestDiagnostics]:
    acc, diag = HourlyAccumulator(), IngestDiagnostics()
    diag.rows_seen += len(chunk)
    stay_series = chunk[source.id_column]
    usable, hours = _chunk_minutes_context(chunk, source, cohort_stays, max_hours,
                                           diag, stay_series)
    raw = chunk[source.value_column]
    parsed = _numeric(raw)
    values = parsed.to_numpy(dtype=np.float64)
    bad = (parsed.isna() & raw.notna()).to_numpy()
    diag.rows_malformed += int((bad & usable).sum())
    names = chunk[source.name_column]
    sel = usable & ~np.isnan(values) & np.isfinite(values) & names.notna().to_numpy()
    idx = np.flatnonzero(sel)
    diag.rows_folded += len(idx)
    stay_list = stay_series.tolist()
    hour_list = hours.tolist()
    name_list = names.tolist()
    raw_list = raw.tolist()
    add = acc.add
    for i in idx:
        add(stay_list[i], hour_list[i], str(name_list[i]), float(raw_list[i]))
    return acc, diag


def _fold_event_chunk(chunk: pd.DataFrame, source: _EventSource, cohort_stays: set[str],
                      max_hours: int, id_to_stay: dict[str, str],
                      intime_by_stay: dict[str, pd.Timestamp],
                      item_names: dict[int, str]) -> tuple[HourlyAccumulator, IngestDiagnostics]:
    acc, diag = HourlyAccumulator(), IngestDiagnostics()
    diag.rows_seen += len(chunk)

    ids = chunk[source.id_column]
    stays = ids.map(id_to_stay)
    in_cohort = stays.notna().to_numpy()
    diag.rows_not_in_cohort += int((~in_cohort).sum())

    times_raw = chunk[source.time_column]
    times = pd.to_datetime(times_raw, format="%Y-%m-%d %H:%M:%S", errors="coerce")
    time_bad = (times.isna() & times_raw.notna()).to_numpy()

    intimes = pd.to_datetime(stays.map(intime_by_stay))
    offset_hours = (times - intimes).dt.total_seconds().to_numpy() / 3600.0

    items = _numeric(chunk[source.item_column])
    names = items.map(lambda x: item_names.get(int(x)) if pd.notna(x) else None)
    unknown = (names.isna() & items.notna()).to_numpy()
    diag.rows_unknown_item += int((unknown & in_cohort).sum())

    raw_values = chunk[source.value_column]
    values = _numeric(raw_values)
    value_bad = (values.isna() & raw_values.notna()).to_numpy()
    diag.rows_malformed += int(((time_bad | value_bad) & in_cohort).sum())

    with np.errstate(invalid="ignore"):
        in_window = (offset_hours >= 0) & (offset_hours < max_hours)
    known = names.notna().to_numpy()
    diag.rows_out_of_window += int(
        (in_cohort & known & ~time_bad & ~np.isnan(offset_hours) & ~in_window).sum())

    vals = values.to_numpy(dtype=np.float64)
    sel = (in_cohort & known & ~np.isnan(offset_hours) & in_window
           & ~np.isnan(vals) & np.isfinite(vals))
    idx = np.flatnonzero(sel)
    diag.rows_folded += len(idx)
    stay_list = stays.tolist()
    name_list = names.tolist()
    hour_list = np.floor(np.where(sel, offset_hours, 0.0)).astype(np.int64).tolist()
    raw_list = raw_values.tolist()
    add = acc.add
    for i in idx:
        add(stay_list[i], hour_list[i], name_list[i], float(raw_list[i]))
    return acc, diag


def stream_hourly(cfg: PipelineConfig, cohort: CohortTable,
                  chunk_rows: int | None = None, workers: int = 1) -> HourlyAggregate:
    """Stream every measurement source for the dataset into an hourly aggregate.

    Rows outside the cohort or outside [0, max_hours) are dropped; rows with
    unparseable numerics are skipped and tallied, never fatal. The result is
    bit-identical for any chunk size and any worker count.
    """
    if not len(cohort):
        raise EmptyCohort("cannot aggregate an empty cohort")
    chunk_rows = chunk_rows or cfg.chunk_rows
    workers = max(1, workers)
    cohort_stays = set(cohort.stay_ids())

    id_to_stay = {stay: stay for stay in cohort_stays}
    intime_by_stay: dict[str, pd.Timestamp] = {}
    hadm_to_stay: dict[str, str] = {}
    if cfg.dataset_name == "mimiciv":
        for stay, meta in cohort.meta.items():
            intime_by_stay[stay] = meta["intime"]
            if meta.get("hadm_id"):
                hadm_to_stay[meta["hadm_id"]] = stay
    item_names = schema.item_id_to_name() if cfg.dataset_name == "mimiciv" else {}

    total = HourlyAccumulator()
    diagnostics = IngestDiagnostics()

    with ThreadPoolExecutor(max_workers=workers) as pool:
        for source in _SOURCES[cfg.dataset_name]:
            path = resolve_file(cfg.base_dir, schema.DATASET_FILES[cfg.dataset_name][source.file_key])

            if isinstance(source, _WideSource):
                required = (source.id_column, source.offset_column)
                task = lambda chunk, s=source: _fold_wide_chunk(chunk, s, cohort_stays, cfg.max_hours)
            elif isinstance(source, _LongSource):
                required = (source.id_column, source.offset_column,
                            source.name_column, source.value_column)
                task = lambda chunk, s=source: _fold_long_chunk(chunk, s, cohort_stays, cfg.max_hours)
            else:
                required = (source.id_column, source.time_column,
                            source.item_column, source.value_column)
                key_map = hadm_to_stay if source.id_column == "hadm_id" else id_to_stay
                task = lambda chunk, s=source, m=key_map: _fold_event_chunk(
                    chunk, s, cohort_stays, cfg.max_hours, m, intime_by_stay, item_names)

            pending = []
            first = True
            with pd.read_csv(path, dtype=str, chunksize=chunk_rows) as reader:
                for chunk in reader:
                    if first:
                        for column in required:
                            if column not in chunk.columns:
                                raise IngestSchema(
                                    f"{path.name}: required column {column!r} is absent")
                        first = False
                    pending.append(pool.submit(task, chunk))
                    del chunk
                    # Bound in-flight chunks so memory stays O(workers * chunk).
                    while len(pending) > workers:
                        acc, diag = pending.pop(0).result()
                        total.merge(acc)
                        diagnostics.merge(diag)
            if first:
                # Zero-row file: still check its header.
                header = pd.read_csv(path, dtype=str, nrows=0)
                for column in required:
                    if column not in header.columns:
                        raise IngestSchema(f"{path.name}: required column {column!r} is absent")
            for future in pending:
                acc, diag = future.result()
                total.merge(acc)
                diagnostics.merge(diag)
            log.info("stage=ingest file=%s rows=%d entries=%d",
                     source.file_key, diagnostics.rows_seen, len(total))

    aggregate = total.finalize(diagnostics)
    aggregate.check_invariants(cfg.max_hours, cohort_stays)
    return aggregate
