"""End-to-end orchestration of the nine preprocessing stages.

Stage order is fixed: cohort -> split -> labels -> static -> timeseries ->
integrate (concatenate + mask) -> scale -> impute -> write -> validate.
Each stage consumes only prior-stage products.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass

import numpy as np

from . import artifacts, ingest, labels as labels_mod, staticfeat, tensorize, timeseries
from .artifacts import StageProducts, ValidationReport
from .config import PipelineConfig
from .errors import PipelineError
from .split import SPLITS, split_patients
from .staticfeat import StaticMatrix
from .timeseries import WindowedDynamic

log = logging.getLogger("survtensor")


@dataclass
class PreprocessResult:
    out_dir: str
    manifest: dict
    report: ValidationReport


def _stage(name: str, fn, *args, **kwargs):
    start = time.perf_counter()
    try:
        result = fn(*args, **kwargs)
    except PipelineError as exc:
        raise type(exc)(f"[stage {name}] {exc}") from exc
    log.info("stage=%s wall_ms=%.0f", name, (time.perf_counter() - start) * 1000.0)
    return result


def _empty_dynamic(stay_order: list[str], cfg: PipelineConfig) -> WindowedDynamic:
    n, w = len(stay_order), cfg.num_windows
    return WindowedDynamic(stays=list(stay_order), windows=w, features=[],
                           values=np.zeros((n, w, 0)), observed=np.zeros((n, w, 0), dtype=bool))


def _empty_static(stay_order: list[str]) -> StaticMatrix:
    n = len(stay_order)
    return StaticMatrix(stays=list(stay_order), columns=[], values=np.zeros((n, 0)),
                        observed=np.zeros((n, 0), dtype=bool), groups={})


def _trajectory_payload(scaled: np.ndarray, mask: np.ndarray, names: list[str],
                        n_dynamic: int, max_features: int = 10) -> dict:
    """Mean +- SD per window for the best-covered dynamic features, from
    observed training cells only (what the trajectory figure displays)."""
    coverage = []
    for j in range(n_dynamic):
        count = int(mask[:, :, j].sum())
        if count > 0:
            coverage.append((-count, names[j], j))
    coverage.sort()
    selected = coverage[:max_features]

    features = {}
    for _, name, j in selected:
        means, sds = [], []
        for w in range(scaled.shape[1]):
            cells = scaled[:, w, j][mask[:, w, j].astype(bool)]
            if cells.size:
                means.append(float(cells.mean()))
                sds.append(float(cells.std()))
            else:
                means.append(None)
                sds.append(None)
        features[name] = {"mean": means, "sd": sds}
    return {"windows": int(scaled.shape[1]), "features": features}


def run_preprocess(cfg: PipelineConfig, chunk_rows: int | None = None,
                   workers: int = 1) -> PreprocessResult:
    """Run all stages, write outputs, and validate them."""
    dataset = cfg.dataset_name
    horizon = float(cfg.max_horizon_hours)

    cohort = _stage("cohort", ingest.load_cohort, cfg)
    assignment = _stage("split", split_patients, cohort, cfg.split_ratios, cfg.seed)
    log.info("stage=split counts=%s", assignment.counts)

    split_stays = {name: [stay for stay in cohort.stay_ids()
                          if assignment.by_stay[stay] == name] for name in SPLITS}

    def build_labels():
        raw = labels_mod.extract_labels(cohort)
        truncated = labels_mod.truncate_horizon(raw, horizon)
        per_split = {}
        for name in SPLITS:
            members = set(split_stays[name])
            keep = np.array([stay in members for stay in truncated.stay_ids])
            per_split[name] = truncated.subset(keep)
        grid = labels_mod.fit_grid(per_split["train"], cfg.n_time_bins,
                                   cfg.discretisation_method, horizon)
        km = labels_mod.kaplan_meier(truncated)
        cif = labels_mod.cumulative_incidence(truncated)
        return truncated, per_split, grid, km, cif

    truncated, labels_by_split, grid, km, cif = _stage("labels", build_labels)

    def build_static():
        if not cfg.modalities["static"]:
            return _empty_static(cohort.stay_ids())
        train_cohort = cohort.subset(set(split_stays["train"]))
        encoder = staticfeat.fit_static_encoder(train_cohort, cfg.rare_category_threshold,
                                                merge_rare=cfg.rare_category_merge)
        return staticfeat.encode_static(cohort, encoder)

    static_full = _stage("static", build_static)

    icd_by_split = None
    icd_vocabulary = None
    if cfg.modalities["icd"]:
        def build_icd():
            codes = ingest.load_diagnoses(cfg, cohort)
            vocabulary = staticfeat.fit_icd_vocabulary(
                [codes[stay] for stay in split_stays["train"]], cfg.icd_top_k)
            matrices = {name: staticfeat.encode_icd(codes, split_stays[name], vocabulary)
                        for name in SPLITS}
            return matrices, vocabulary
        icd_by_split, icd_vocabulary = _stage("icd", build_icd)

    rad_by_split = None
    if cfg.modalities["radiology"]:
        def build_rad():
            matrix = staticfeat.attach_radiology(cfg.radiology_embeddings, cohort.stay_ids())
            index = {stay: i for i, stay in enumerate(cohort.stay_ids())}
            return {name: matrix[[index[s] for s in split_stays[name]]] for name in SPLITS}
        rad_by_split = _stage("radiology", build_rad)

    ingest_diagnostics: dict = {}

    def build_dynamic():
        if not cfg.modalities["timeseries"]:
            return _empty_dynamic(cohort.stay_ids(), cfg)
        hourly = ingest.stream_hourly(cfg, cohort, chunk_rows=chunk_rows, workers=workers)
        ingest_diagnostics.update(hourly.diagnostics.as_dict())
        log.info("stage=timeseries entries=%d diagnostics=%s",
                 len(hourly), ingest_diagnostics)
        return timeseries.windowise(hourly, cohort.stay_ids(), cfg)

    dynamic_full = _stage("timeseries", build_dynamic)

    def integrate():
        dynamic_splits = {name: dynamic_full.subset_stays(split_stays[name])
                          for name in SPLITS}
        if dynamic_full.features:
            retained = timeseries.fit_feature_filter(dynamic_splits["train"],
                                                     cfg.missingness_threshold)
            dynamic_splits = {name: timeseries.apply_feature_filter(wd, retained)
                              for name, wd in dynamic_splits.items()}
        else:
            retained = []
        tensors = {}
        for name in SPLITS:
            static_split = staticfeat.subset_static(static_full, split_stays[name])
            tensors[name] = tensorize.assemble(dynamic_splits[name], static_split)
        return tensors, retained, dynamic_splits

    tensors, retained, dynamic_splits = _stage("integrate", integrate)
    log.info("stage=integrate n_dynamic=%d n_static=%d dropped_features=%d",
             tensors["train"].n_dynamic, tensors["train"].n_static,
             len(dynamic_full.features) - len(retained))

    def scale_and_impute():
        train = tensors["train"]
        scaler = tensorize.fit_scaler(train.values, train.mask, train.feature_names)
        medians = None
        scaled_train_for_stats = None
        for name in SPLITS:
            tensor = tensors[name]
            scaled = tensorize.apply_scaler(tensor.values, tensor.mask, scaler)
            if name == "train":
                scaled_train_for_stats = scaled.copy()
                if cfg.dynamic_imputation == "median":
                    medians = tensorize.train_scaled_medians(scaled, tensor.mask)
            tensor.values = tensorize.impute(scaled, tensor.mask, tensor.n_dynamic,
                                             cfg.dynamic_imputation, medians)
        return scaler, scaled_train_for_stats

    scaler, scaled_train = _stage("scale+impute", scale_and_impute)

    def build_stats():
        universe_fraction = timeseries.observed_fraction(
            dynamic_full.subset_stays(split_stays["train"]))
        per_split_missing = {}
        for name in SPLITS:
            mask = tensors[name].mask
            per_split_missing[name] = 1.0 - float(mask.mean()) if mask.size else 0.0
        stats = {
            "dataset": dataset,
            "horizon_hours": horizon,
            "num_risks": cfg.num_risks,
            "windows": cfg.num_windows,
            "window_size_hours": cfg.window_size_hours,
            "splits": {name: labels_mod.label_statistics(labels_by_split[name])
                       for name in SPLITS},
            "overall": labels_mod.label_statistics(truncated),
            "feature_missingness": {
                "universe": dynamic_full.features,
                "train_observed_fraction": universe_fraction,
                "retained": retained,
                "dropped": [f for f in dynamic_full.features if f not in retained],
                "per_split_missing_rate": per_split_missing,
            },
            "counts": {
                "stays": {name: len(split_stays[name]) for name in SPLITS},
                "patients": {name: assignment.counts[name]["patients"] for name in SPLITS},
                "n_dynamic": tensors["train"].n_dynamic,
                "n_static": tensors["train"].n_static,
            },
            "ingest_diagnostics": ingest_diagnostics,
            "trajectories": _trajectory_payload(scaled_train, tensors["train"].mask,
                                                tensors["train"].feature_names,
                                                tensors["train"].n_dynamic),
        }
        return stats

    stats = _stage("stats", build_stats)

    products = StageProducts(config=cfg, tensors=tensors, labels=labels_by_split,
                             grid=grid, scaler=scaler, splits=assignment, stats=stats,
                             km=km, cif=cif, icd=icd_by_split,
                             icd_vocabulary=icd_vocabulary, rad=rad_by_split)
    manifest = _stage("write", artifacts.write_outputs, products)
    report = _stage("validate", artifacts.validate_outputs, cfg.output_dir)
    for check in report.checks:
        log.info("validate check=%s passed=%s %s", check.name, check.passed, check.details)
    return PreprocessResult(out_dir=cfg.output_dir, manifest=manifest, report=report)
