"""Static features: one-hot demographics with rare-category merging, ICD
multi-hot vectors, and radiology embedding pass-through.

Encoders are fitted on the training split and applied unchanged to the
others, so the column space is identical across splits.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import IngestMissingFile, RadiologyMisaligned
from .ingest import CohortTable

OTHER = "Other"


@dataclass(frozen=True)
class StaticEncoder:
    attributes: tuple[str, ...]                # categorical attributes, sorted
    vocabularies: dict[str, tuple[str, ...]]   # attr -> lexicographic vocab
    rare_map: dict[str, dict[str, str]]        # attr -> raw category -> target


@dataclass
class StaticMatrix:
    stays: list[str]
    columns: list[str]
    values: np.ndarray    # (N, F_s) float64; NaN = missing continuous
    observed: np.ndarray  # (N, F_s) bool
    groups: dict[str, tuple[int, int]]  # attr -> [start, stop) column range


def _is_missing(value: str | None) -> bool:
    return value is None or str(value).strip() == "" or str(value).strip().lower() == "nan"


def fit_static_encoder(train_cohort: CohortTable, rare_threshold: float,
                       merge_rare: bool = True) -> StaticEncoder:
    """Fit categorical vocabularies on the training cohort.

    A category is kept if its training prevalence is at least rare_threshold;
    merged categories map to "Other". Column order is lexicographic.
    """
    attributes = tuple(sorted(train_cohort.records[0].static_attributes)) if train_cohort.records else ()
    n = max(1, len(train_cohort.records))
    threshold = rare_threshold if merge_rare else 0.0

    vocabularies: dict[str, tuple[str, ...]] = {}
    rare_map: dict[str, dict[str, str]] = {}
    for attr in attributes:
        counts = Counter()
        for record in train_cohort.records:
            value = record.static_attributes.get(attr)
            if not _is_missing(value):
                counts[str(value).strip()] += 1
        kept = [c for c in counts if counts[c] / n >= threshold]
        merged = [c for c in counts if c not in kept]
        vocab = sorted(kept + ([OTHER] if merged else []))
        vocabularies[attr] = tuple(vocab)
        rare_map[attr] = {c: (c if c in kept else OTHER) for c in counts}
    return StaticEncoder(attributes=attributes, vocabularies=vocabularies, rare_map=rare_map)


def encode_static(cohort: CohortTable, encoder: StaticEncoder) -> StaticMatrix:
    """One row per stay in cohort order: continuous age column, then one-hot
    groups. Missing categorical -> all-zero group with observed False;
    missing age -> NaN with observed False (mean-imputed later); a category
    unseen at fit time maps to "Other" when present, else an all-zero group.
    """
    columns = ["age"]
    groups: dict[str, tuple[int, int]] = {}
    for attr in encoder.attributes:
        start = len(columns)
        columns.extend(f"{attr}={cat}" for cat in encoder.vocabularies[attr])
        groups[attr] = (start, len(columns))

    n = len(cohort.records)
    values = np.zeros((n, len(columns)))
    observed = np.zeros((n, len(columns)), dtype=bool)
    for i, record in enumerate(cohort.records):
        values[i, 0] = record.age_years
        observed[i, 0] = not (record.age_years is None or np.isnan(record.age_years))
        if not observed[i, 0]:
            values[i, 0] = np.nan
        for attr in encoder.attributes:
            start, stop = groups[attr]
            vocab = encoder.vocabularies[attr]
            raw = record.static_attributes.get(attr)
            if _is_missing(raw):
                continue  # all-zero group, observed stays False
            observed[i, start:stop] = True
            category = encoder.rare_map[attr].get(str(raw).strip())
            if category is None:
                category = OTHER if OTHER in vocab else None
            if category is not None and category in vocab:
                values[i, start + vocab.index(category)] = 1.0
    return StaticMatrix(stays=cohort.stay_ids(), columns=columns, values=values,
                        observed=observed, groups=groups)


def subset_static(matrix: StaticMatrix, stay_ids: list[str]) -> StaticMatrix:
    index = {stay: i for i, stay in enumerate(matrix.stays)}
    rows = [index[s] for s in stay_ids]
    return StaticMatrix(stays=list(stay_ids), columns=list(matrix.columns),
                        values=matrix.values[rows], observed=matrix.observed[rows],
                        groups=dict(matrix.groups))


# ---------------------------------------------------------------------------
# ICD multi-hot
# ---------------------------------------------------------------------------

def fit_icd_vocabulary(train_codes: list[list[str]], top_k: int) -> list[str]:
    """Top-k codes by training stay-level presence; ties break toward the
    lexicographically smaller code. Columns come out in code order."""
    counts = Counter()
    for codes in train_codes:
        for code in set(codes):
            counts[code] += 1
    ranked = sorted(counts, key=lambda code: (-counts[code], code))
    return sorted(ranked[:top_k])


def encode_icd(codes_by_stay: dict[str, list[str]], stay_order: list[str],
               vocabulary: list[str]) -> np.ndarray:
    """Multi-hot (N, K) uint8 matrix in stay order."""
    index = {code: j for j, code in enumerate(vocabulary)}
    matrix = np.zeros((len(stay_order), len(vocabulary)), dtype=np.uint8)
    for i, stay in enumerate(stay_order):
        for code in codes_by_stay.get(stay, ()):
            j = index.get(code)
            if j is not None:
                matrix[i, j] = 1
    return matrix


# ---------------------------------------------------------------------------
# Radiology embedding pass-through
# ---------------------------------------------------------------------------

def attach_radiology(path, stay_order: list[str]) -> np.ndarray:
    """Load a precomputed embeddings matrix and verify its row alignment.

    The stay-id sidecar must list exactly the cohort stays in cohort order;
    any count or order mismatch raises RadiologyMisaligned.
    """
    from .npyio import read_npy
    from .synthgen import radiology_sidecar_path

    path = Path(path)
    if not path.is_file():
        raise IngestMissingFile(f"radiology embeddings file {path} is missing")
    sidecar = radiology_sidecar_path(path)
    if not sidecar.is_file():
        raise RadiologyMisaligned(f"stay-id sidecar {sidecar.name} is missing")
    with open(sidecar, "r", encoding="utf-8") as fh:
        recorded = json.load(fh).get("stay_ids", [])
    matrix = read_npy(path)
    if matrix.ndim != 2 or matrix.shape[0] != len(stay_order):
        raise RadiologyMisaligned(
            f"embeddings have {matrix.shape[0] if matrix.ndim else 0} rows, "
            f"cohort has {len(stay_order)} stays")
    if list(recorded) != list(stay_order):
        raise RadiologyMisaligned("sidecar stay ids do not match the cohort stay order")
    return np.asarray(matrix, dtype=np.float64)
