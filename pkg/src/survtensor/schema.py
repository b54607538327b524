"""Dataset schema knowledge shared by the synthetic generator and ingest.

Column names, outcome alias tables, the bundled chart/lab item dictionary,
and the HIPAA-aware age parser live here so the writer and the reader can
never drift apart.
"""

from __future__ import annotations

import json
import math
from importlib import resources

# ---------------------------------------------------------------------------
# Outcome alias tables. Matching is case-insensitive on the stripped string;
# strings absent from a table are invalid outcomes (filtered at cohort load,
# rejected with LabelUnknownOutcome at label extraction).
# ---------------------------------------------------------------------------

OUTCOME_ALIASES: dict[str, dict[str, int]] = {
    "mimiciv": {
        "expired": 1,
        "died": 1,
        "home": 0,
        "home health care": 0,
        "snf": 0,
        "skilled nursing facility": 0,
        "rehab": 0,
        "rehabilitation": 0,
        "hospice": 0,
        "against advice": 0,
        "long term care": 0,
    },
    "eicu": {
        "expired": 1,
        "alive": 0,
    },
    # Emergency-department dispositions: four competing outcomes plus
    # "observation" (still under observation, outcome undetermined -> censored).
    "mcmed": {
        "home": 1,
        "discharge": 1,
        "ward": 2,
        "inpatient": 2,
        "icu": 3,
        "death": 4,
        "expired": 4,
        "observation": 0,
        "lwbs": 0,
    },
}

# Static attributes carried per dataset (cohort -> one-hot encoding).
STATIC_ATTRIBUTES: dict[str, tuple[str, ...]] = {
    "mimiciv": ("gender", "ethnicity", "admission_type"),
    "eicu": ("gender", "ethnicity", "unit_type"),
    "mcmed": ("gender", "ethnicity", "acuity"),
}

# ---------------------------------------------------------------------------
# eICU wide vital files: raw column -> canonical feature name.
# ---------------------------------------------------------------------------

EICU_PERIODIC_COLUMNS = {
    "heartrate": "heart_rate",
    "sao2": "spo2",
    "respiration": "resp_rate",
    "temperature": "temperature",
}

EICU_APERIODIC_COLUMNS = {
    "noninvasivesystolic": "nibp_systolic",
    "noninvasivediastolic": "nibp_diastolic",
    "noninvasivemean": "nibp_mean",
}

# MC-MED long-format numerics: names treated as canonical feature names.
MCMED_NUMERIC_FEATURES = (
    "heart_rate", "spo2", "resp_rate", "sbp", "dbp", "map", "temperature",
)

# Expected raw file locations relative to base_dir (without .gz suffix).
DATASET_FILES: dict[str, dict[str, str]] = {
    "mimiciv": {
        "icustays": "icu/icustays.csv",
        "patients": "hosp/patients.csv",
        "admissions": "hosp/admissions.csv",
        "chartevents": "icu/chartevents.csv",
        "labevents": "hosp/labevents.csv",
        "diagnoses": "hosp/diagnoses_icd.csv",
    },
    "eicu": {
        "patient": "patient.csv",
        "vitalPeriodic": "vitalPeriodic.csv",
        "vitalAperiodic": "vitalAperiodic.csv",
        "lab": "lab.csv",
    },
    "mcmed": {
        "visits": "visits.csv",
        "numerics": "numerics.csv",
        "labs": "labs.csv",
        "pmh": "pmh.csv",
    },
}


def load_item_dictionary() -> dict:
    """Bundled, versioned item-id dictionary for chart/lab events."""
    text = resources.files("survtensor.data").joinpath("mimiciv_items.json").read_text("utf-8")
    return json.loads(text)


def item_id_to_name() -> dict[int, str]:
    return {entry["itemid"]: entry["name"] for entry in load_item_dictionary()["items"]}


def item_name_to_id() -> dict[str, int]:
    return {entry["name"]: entry["itemid"] for entry in load_item_dictionary()["items"]}


def item_table(name: str) -> str:
    """Which raw table ("chart" or "lab") carries the named feature."""
    for entry in load_item_dictionary()["items"]:
        if entry["name"] == name:
            return entry["table"]
    raise KeyError(name)


_OVER_89_STRINGS = {"> 89", ">89", "greater than 89"}


def parse_age(raw) -> float | None:
    """Parse a raw age field.

    "greater than 89"-style de-identified entries map to 90; numeric ages
    above 89 are likewise capped at 90 so the post-conversion age never
    exceeds 90. Non-numeric entries return None (row is filtered).
    """
    if raw is None:
        return None
    text = str(raw).strip()
    if not text or text.lower() == "nan":
        return None
    if text.lower() in _OVER_89_STRINGS:
        return 90.0
    try:
        value = float(text)
    except ValueError:
        return None
    if math.isnan(value) or math.isinf(value) or value < 0:
        return None
    return 90.0 if value > 89 else value


def outcome_code(dataset: str, raw_outcome: str) -> int | None:
    """Map an outcome string to its event code, or None if unknown/blank."""
    if raw_outcome is None:
        return None
    text = str(raw_outcome).strip().lower()
    if not text or text == "nan":
        return None
    return OUTCOME_ALIASES[dataset].get(text)
