"""Output serialisation and the automated data-quality validation suite.

All outputs are language-neutral: npy v1.0 for arrays, JSON for metadata,
CSV for the estimator curves consumed by the plotting layer. Writes land in
a temporary sibling directory that is moved into place only after every file
(including the digest manifest) has been written, so a failed run leaves no
partial outputs behind.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
import shutil
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .config import PipelineConfig, config_fingerprint
from .errors import TensorShape
from .labels import CIFCurves, DiscretizationGrid, KMCurve, SurvivalLabels
from .npyio import read_npy, write_npy
from .split import SPLITS, SplitAssignment
from .tensorize import AssembledTensor, ScalerParams


@dataclass
class StageProducts:
    """Everything the nine stages hand to the writer."""

    config: PipelineConfig
    tensors: dict[str, AssembledTensor]       # per split, post-imputation
    labels: dict[str, SurvivalLabels]         # per split, truncated
    grid: DiscretizationGrid
    scaler: ScalerParams
    splits: SplitAssignment
    stats: dict
    km: KMCurve
    cif: CIFCurves
    icd: dict[str, np.ndarray] | None = None
    icd_vocabulary: list[str] | None = None
    rad: dict[str, np.ndarray] | None = None


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def _write_json(path: Path, payload) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def _km_rows(km: KMCurve):
    yield [0.0, 1.0, 1.0, 1.0, km.n_subjects]
    for i in range(len(km.times)):
        yield [float(km.times[i]), float(km.survival[i]), float(km.ci_lower[i]),
               float(km.ci_upper[i]), int(km.at_risk[i])]


def _cif_rows(cif: CIFCurves, num_risks: int):
    yield [0.0, 1.0] + [0.0] * num_risks
    for i in range(len(cif.times)):
        yield ([float(cif.times[i]), float(cif.survival[i])]
               + [float(cif.cif[k][i]) for k in range(1, num_risks + 1)])


def _config_echo(cfg: PipelineConfig) -> dict:
    echo = {}
    for name in sorted(cfg.__dataclass_fields__):
        if name in ("defaulted", "chunk_rows"):
            continue
        value = getattr(cfg, name)
        if isinstance(value, tuple):
            value = list(value)
        echo[name] = value
    return echo


def _check_product_shapes(products: StageProducts) -> None:
    cfg = products.config
    reference = None
    for split in SPLITS:
        tensor = products.tensors[split]
        n, w, f = tensor.values.shape
        if tensor.mask.shape != tensor.values.shape:
            raise TensorShape(f"{split}: mask shape {tensor.mask.shape} != tensor shape")
        if w != cfg.num_windows:
            raise TensorShape(f"{split}: tensor has {w} windows, config says {cfg.num_windows}")
        if len(tensor.feature_names) != f:
            raise TensorShape(f"{split}: {len(tensor.feature_names)} names for {f} columns")
        if len(products.labels[split]) != n:
            raise TensorShape(f"{split}: {len(products.labels[split])} labels for {n} stays")
        if reference is None:
            reference = tensor.feature_names
        elif tensor.feature_names != reference:
            raise TensorShape(f"{split}: feature names differ from train")
        if products.icd is not None and products.icd[split].shape[0] != n:
            raise TensorShape(f"{split}: icd rows != {n}")
        if products.rad is not None and products.rad[split].shape[0] != n:
            raise TensorShape(f"{split}: radiology rows != {n}")
    if len(products.scaler.feature_names) != len(reference):
        raise TensorShape("scaler column count differs from tensor columns")


def write_outputs(products: StageProducts) -> dict:
    """Emit the full output tree atomically and return the manifest."""
    _check_product_shapes(products)
    cfg = products.config
    dataset = cfg.dataset_name
    out_dir = Path(cfg.output_dir)
    tmp_dir = out_dir.parent / (out_dir.name + ".tmp-partial")
    if tmp_dir.exists():
        shutil.rmtree(tmp_dir)
    tmp_dir.mkdir(parents=True)

    try:
        written: list[tuple[str, tuple | None, str | None]] = []

        def emit_array(rel: str, array: np.ndarray, dtype: str) -> None:
            write_npy(array, dtype, tmp_dir / rel)
            written.append((rel, tuple(int(d) for d in array.shape), dtype))

        for split in SPLITS:
            tensor = products.tensors[split]
            emit_array(f"x_{split}_{dataset}.npy", tensor.values, "f32")
            emit_array(f"x_{split}_{dataset}_mask.npy", tensor.mask, "u8")
            emit_array(f"durations_{split}_{dataset}.npy",
                       products.labels[split].durations, "f32")
            emit_array(f"events_{split}_{dataset}.npy",
                       products.labels[split].events, "i64")
            if products.icd is not None:
                emit_array(f"x_{split}_{dataset}_icd.npy", products.icd[split], "u8")
            if products.rad is not None:
                emit_array(f"x_{split}_{dataset}_rad.npy", products.rad[split], "f32")
        emit_array(f"cuts_{dataset}.npy", products.grid.cuts, "f64")

        train = products.tensors["train"]
        _write_json(tmp_dir / "feature_names.json", {
            "feature_names": train.feature_names,
            "dynamic": train.feature_names[:train.n_dynamic],
            "static": train.feature_names[train.n_dynamic:],
            "n_dynamic": train.n_dynamic,
            "n_static": train.n_static,
        })
        written.append(("feature_names.json", None, None))

        scaler_rel = f"scaler_{dataset}.json"
        _write_json(tmp_dir / scaler_rel, {
            "feature_names": list(products.scaler.feature_names),
            "mean": [float(x) for x in products.scaler.mean],
            "std": [float(x) for x in products.scaler.std],
            "observed_count": [int(x) for x in products.scaler.observed_count],
            "degenerate": [bool(x) for x in products.scaler.degenerate],
        })
        written.append((scaler_rel, None, None))

        rad_dim = (int(next(iter(products.rad.values())).shape[1])
                   if products.rad is not None else None)
        _write_json(tmp_dir / "modality_info.json", {
            "dataset": dataset,
            "modalities": {k: bool(v) for k, v in cfg.modalities.items()},
            "num_risks": cfg.num_risks,
            "icd_vocabulary": products.icd_vocabulary,
            "icd_top_k": cfg.icd_top_k if products.icd is not None else None,
            "radiology_dim": rad_dim,
        })
        written.append(("modality_info.json", None, None))

        splits_rel = f"splits_{dataset}.json"
        _write_json(tmp_dir / splits_rel, {
            "subjects": products.splits.by_subject,
            "stays": products.splits.by_stay,
            "counts": products.splits.counts,
            "ratios": list(products.splits.ratios),
            "seed": products.splits.seed,
        })
        written.append((splits_rel, None, None))

        stats_rel = f"stats_{dataset}.json"
        _write_json(tmp_dir / stats_rel, products.stats)
        written.append((stats_rel, None, None))

        figures = tmp_dir / "figures_data"
        figures.mkdir()
        km_rel = f"figures_data/{dataset}_km.csv"
        with open(tmp_dir / km_rel, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["times", "survival", "ci_lower", "ci_upper", "at_risk"])
            writer.writerows(_km_rows(products.km))
        written.append((km_rel, None, None))
        cif_rel = f"figures_data/{dataset}_cif.csv"
        with open(tmp_dir / cif_rel, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["times", "survival"]
                            + [f"cif_{k}" for k in range(1, cfg.num_risks + 1)])
            writer.writerows(_cif_rows(products.cif, cfg.num_risks))
        written.append((cif_rel, None, None))

        files = []
        for rel, shape, dtype in sorted(written):
            path = tmp_dir / rel
            files.append({
                "path": rel,
                "bytes": path.stat().st_size,
                "sha256": _sha256(path),
                "shape": list(shape) if shape else None,
                "dtype": dtype,
            })
        manifest = {
            "run_id": config_fingerprint(cfg)[:12],
            "pipeline_version": __version__,
            "dataset": dataset,
            "config_sha256": config_fingerprint(cfg),
            "config": _config_echo(cfg),
            "num_risks": cfg.num_risks,
            "split_counts": products.splits.counts,
            "scaler_sha256": _sha256(tmp_dir / scaler_rel),
            "files": files,
        }
        _write_json(tmp_dir / "manifest.json", manifest)
    except BaseException:
        shutil.rmtree(tmp_dir, ignore_errors=True)
        raise

    out_dir.mkdir(parents=True, exist_ok=True)
    for entry in sorted(tmp_dir.iterdir()):
        dest = out_dir / entry.name
        if entry.is_dir():
            if dest.exists():
                shutil.rmtree(dest)
            shutil.move(str(entry), str(dest))
        else:
            os.replace(entry, dest)
    tmp_dir.rmdir()
    return manifest


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

@dataclass
class ValidationCheck:
    name: str
    passed: bool
    details: str


@dataclass
class ValidationReport:
    checks: list[ValidationCheck]

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "checks": [{"name": c.name, "passed": c.passed, "details": c.details}
                       for c in self.checks],
        }


def _run_check(checks: list[ValidationCheck], name: str, fn) -> None:
    try:
        passed, details = fn()
    except Exception as exc:  # a broken file fails the check, never the run
        passed, details = False, f"{type(exc).__name__}: {exc}"
    checks.append(ValidationCheck(name=name, passed=passed, details=details))


def validate_outputs(out_dir) -> ValidationReport:
    """Run the data-quality checks against an emitted output directory.

    Failures become report entries; the function itself never raises for
    content problems, only if the manifest is unreadable.
    """
    out = Path(out_dir)
    with open(out / "manifest.json", "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    dataset = manifest["dataset"]
    horizon = float(manifest["config"]["max_horizon_hours"])
    num_risks = int(manifest["num_risks"])
    checks: list[ValidationCheck] = []

    def check_digests():
        bad = []
        for entry in manifest["files"]:
            path = out / entry["path"]
            if not path.is_file():
                bad.append(f"{entry['path']} missing")
            elif path.stat().st_size != entry["bytes"]:
                bad.append(f"{entry['path']} size {path.stat().st_size} != {entry['bytes']}")
            elif _sha256(path) != entry["sha256"]:
                bad.append(f"{entry['path']} digest mismatch")
        return not bad, "; ".join(bad) or f"{len(manifest['files'])} files verified"

    def check_shapes():
        problems = []
        shared = None
        for split in SPLITS:
            n_expected = manifest["split_counts"][split]["stays"]
            x = read_npy(out / f"x_{split}_{dataset}.npy")
            mask = read_npy(out / f"x_{split}_{dataset}_mask.npy")
            durations = read_npy(out / f"durations_{split}_{dataset}.npy")
            events = read_npy(out / f"events_{split}_{dataset}.npy")
            if x.ndim != 3:
                problems.append(f"{split}: tensor is {x.ndim}-d")
                continue
            if x.shape != mask.shape:
                problems.append(f"{split}: mask shape {mask.shape} != tensor {x.shape}")
            if x.shape[0] != n_expected:
                problems.append(f"{split}: {x.shape[0]} rows, split has {n_expected} stays")
            if durations.shape != (x.shape[0],) or events.shape != (x.shape[0],):
                problems.append(f"{split}: label arrays do not have length N")
            if shared is None:
                shared = x.shape[1:]
            elif x.shape[1:] != shared:
                problems.append(f"{split}: (W, F) {x.shape[1:]} differs from train {shared}")
            for optional in ("icd", "rad"):
                path = out / f"x_{split}_{dataset}_{optional}.npy"
                if path.is_file():
                    extra = read_npy(path)
                    if extra.shape[0] != x.shape[0]:
                        problems.append(f"{split}: {optional} rows != N")
        return not problems, "; ".join(problems) or f"(W, F) = {tuple(shared)} across splits"

    def check_mask_binary():
        problems = []
        for split in SPLITS:
            mask = read_npy(out / f"x_{split}_{dataset}_mask.npy")
            distinct = np.unique(mask)
            if not np.isin(distinct, (0, 1)).all():
                problems.append(f"{split}: mask values {distinct.tolist()}")
        return not problems, "; ".join(problems) or "masks are strictly {0, 1}"

    def check_event_range():
        problems = []
        for split in SPLITS:
            events = read_npy(out / f"events_{split}_{dataset}.npy")
            if events.size and (events.min() < 0 or events.max() > num_risks):
                problems.append(
                    f"{split}: events span [{events.min()}, {events.max()}], "
                    f"task allows [0, {num_risks}]")
        return not problems, "; ".join(problems) or f"event codes within [0, {num_risks}]"

    def check_duration_range():
        problems = []
        for split in SPLITS:
            durations = read_npy(out / f"durations_{split}_{dataset}.npy")
            if durations.size and (durations.min() < 0 or float(durations.max()) > horizon):
                problems.append(
                    f"{split}: durations span [{durations.min()}, {durations.max()}], "
                    f"horizon is {horizon}")
        return not problems, "; ".join(problems) or f"durations within [0, {horizon}]"

    def check_train_moments():
        with open(out / f"scaler_{dataset}.json", "r", encoding="utf-8") as fh:
            scaler = json.load(fh)
        x = read_npy(out / f"x_train_{dataset}.npy").astype(np.float64)
        mask = read_npy(out / f"x_train_{dataset}_mask.npy").astype(bool)
        flat = x.reshape(-1, x.shape[-1])
        flat_mask = mask.reshape(-1, mask.shape[-1])
        problems, audited = [], 0
        for j in range(flat.shape[1]):
            if scaler["degenerate"][j]:
                continue
            cells = flat[flat_mask[:, j], j]
            if cells.size < 30:
                continue
            audited += 1
            mean = float(cells.mean())
            std = float(cells.std())
            if abs(mean) > 1e-3 or abs(std - 1.0) > 1e-3:
                problems.append(f"column {j}: mean {mean:.2e}, std {std:.6f}")
        return not problems, "; ".join(problems) or f"{audited} columns near (0, 1)"

    def check_missingness():
        rates = {}
        for split in SPLITS:
            mask = read_npy(out / f"x_{split}_{dataset}_mask.npy")
            rates[split] = 1.0 - float(mask.mean()) if mask.size else 0.0
        delta = max(rates.values()) - min(rates.values())
        detail = ", ".join(f"{s}={rates[s]:.4f}" for s in SPLITS) + f", max_delta={delta:.4f}"
        return True, detail

    def check_feature_names():
        with open(out / "feature_names.json", "r", encoding="utf-8") as fh:
            names = json.load(fh)
        x = read_npy(out / f"x_train_{dataset}.npy")
        ok = len(names["feature_names"]) == x.shape[-1]
        return ok, (f"{len(names['feature_names'])} names for {x.shape[-1]} columns")

    _run_check(checks, "digests", check_digests)
    _run_check(checks, "shape_consistency", check_shapes)
    _run_check(checks, "mask_binary", check_mask_binary)
    _run_check(checks, "event_range", check_event_range)
    _run_check(checks, "duration_range", check_duration_range)
    _run_check(checks, "train_moments", check_train_moments)
    _run_check(checks, "missingness_rates", check_missingness)
    _run_check(checks, "feature_names", check_feature_names)
    return ValidationReport(checks=checks)
