"""Run configuration: YAML loading, strict validation, per-dataset defaults.

A run is fully described by one flat YAML mapping. Unknown keys are rejected
so a typo cannot silently fall back to a default, and every rejection names
the single constraint it violated.
"""

from __future__ import annotations

import hashlib
import io
from dataclasses import dataclass, field, replace

import yaml

from .errors import ConfigInvalid, ConfigMissing, ConfigSyntax

DATASETS = ("mimiciv", "eicu", "mcmed")

# ICU datasets observe the first 24h and predict over a 240h horizon; the
# emergency-department dataset observes 6h and predicts over 24h.
DATASET_DEFAULTS: dict[str, dict] = {
    "mimiciv": {"max_hours": 24, "max_horizon_hours": 240, "min_stay_hours": 24.0},
    "eicu": {"max_hours": 24, "max_horizon_hours": 240, "min_stay_hours": 24.0},
    "mcmed": {"max_hours": 6, "max_horizon_hours": 24, "min_stay_hours": 0.5},
}

# Number of competing event codes (excluding 0 = censored) implied by the task.
DATASET_NUM_RISKS = {"mimiciv": 1, "eicu": 1, "mcmed": 4}

MODALITY_NAMES = ("timeseries", "static", "icd", "radiology")

_REQUIRED_KEYS = ("dataset_name", "base_dir", "output_dir")

DEFAULT_CHUNK_ROWS = 500_000


@dataclass(frozen=True)
class PipelineConfig:
    """Validated, immutable description of one preprocessing run."""

    dataset_name: str
    base_dir: str
    output_dir: str
    max_hours: int
    num_windows: int
    window_size_hours: int
    max_horizon_hours: int
    n_time_bins: int
    discretisation_method: str
    missingness_threshold: float
    rare_category_threshold: float
    rare_category_merge: bool
    static_imputation: str
    dynamic_imputation: str
    scaling_method: str
    modalities: dict[str, bool]
    icd_top_k: int
    split_ratios: tuple[float, float, float]
    seed: int
    min_stay_hours: float
    min_age_years: int
    radiology_embeddings: str
    chunk_rows: int = DEFAULT_CHUNK_ROWS
    defaulted: frozenset[str] = field(default_factory=frozenset)

    @property
    def num_risks(self) -> int:
        return DATASET_NUM_RISKS[self.dataset_name]

    def with_overrides(self, **kwargs) -> "PipelineConfig":
        """Return a copy with explicit overrides (clears their default marker)."""
        overridden = {k for k, v in kwargs.items() if v is not None}
        kwargs = {k: v for k, v in kwargs.items() if v is not None}
        if not kwargs:
            return self
        return replace(self, defaulted=self.defaulted - overridden, **kwargs)


def _check(condition: bool, constraint: str) -> None:
    if not condition:
        raise ConfigInvalid(constraint)


def _positive_int(raw: dict, key: str) -> int:
    value = raw[key]
    _check(isinstance(value, int) and not isinstance(value, bool) and value > 0,
           f"{key} must be a positive integer, got {value!r}")
    return value


def _fraction(raw: dict, key: str) -> float:
    value = raw[key]
    _check(isinstance(value, (int, float)) and not isinstance(value, bool)
           and 0.0 <= float(value) <= 1.0,
           f"{key} must lie in [0, 1], got {value!r}")
    return float(value)


def _enum(raw: dict, key: str, allowed: tuple[str, ...]) -> str:
    value = raw[key]
    _check(value in allowed, f"{key} must be one of {allowed}, got {value!r}")
    return value


def load_config(path) -> PipelineConfig:
    """Load and validate a YAML run configuration.

    Pure function of the file bytes: identical bytes produce an identical
    PipelineConfig. Raises ConfigSyntax for unparseable YAML, ConfigMissing
    for an absent required key, ConfigInvalid naming the violated constraint
    otherwise.
    """
    with open(path, "rb") as fh:
        data = fh.read()
    try:
        raw = yaml.safe_load(io.BytesIO(data))
    except yaml.YAMLError as exc:
        raise ConfigSyntax(f"cannot parse config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigSyntax(f"config {path} must be a YAML mapping")
    return config_from_dict(raw)


def config_from_dict(raw: dict) -> PipelineConfig:
    """Validate a raw mapping into a PipelineConfig (see load_config)."""
    for key in _REQUIRED_KEYS:
        if key not in raw or raw[key] is None:
            raise ConfigMissing(f"required key {key!r} is missing")

    known = {
        "dataset_name", "base_dir", "output_dir", "max_hours", "num_windows",
        "window_size_hours", "max_horizon_hours", "n_time_bins",
        "discretisation_method", "missingness_threshold",
        "rare_category_threshold", "rare_category_merge", "static_imputation",
        "dynamic_imputation", "scaling_method", "modalities", "icd_top_k",
        "split_ratios", "seed", "min_stay_hours", "min_age_years",
        "radiology_embeddings", "chunk_rows",
    }
    for key in raw:
        _check(key in known, f"unknown configuration key {key!r}")

    dataset = _enum(raw, "dataset_name", DATASETS)
    per_dataset = DATASET_DEFAULTS[dataset]

    defaults = {
        "max_hours": per_dataset["max_hours"],
        "num_windows": 6,
        "max_horizon_hours": per_dataset["max_horizon_hours"],
        "n_time_bins": 10,
        "discretisation_method": "quantile",
        "missingness_threshold": 0.01,
        "rare_category_threshold": 0.01,
        "rare_category_merge": True,
        "static_imputation": "mean",
        "dynamic_imputation": "zero",
        "scaling_method": "zscore",
        "icd_top_k": 500,
        "split_ratios": [0.70, 0.15, 0.15],
        "seed": 42,
        "min_stay_hours": per_dataset["min_stay_hours"],
        "min_age_years": 18,
        "chunk_rows": DEFAULT_CHUNK_ROWS,
    }

    merged = dict(raw)
    defaulted = set()
    for key, value in defaults.items():
        if key not in merged:
            merged[key] = value
            defaulted.add(key)
    if "window_size_hours" not in merged:
        # Derived default keeps the window arithmetic consistent.
        _check(merged["max_hours"] % merged["num_windows"] == 0,
               "window_size_hours missing and max_hours is not divisible by num_windows")
        merged["window_size_hours"] = merged["max_hours"] // merged["num_windows"]
        defaulted.add("window_size_hours")
    if "radiology_embeddings" not in merged:
        merged["radiology_embeddings"] = str(merged["base_dir"]) + "/radiology_embeddings.npy"
        defaulted.add("radiology_embeddings")

    max_hours = _positive_int(merged, "max_hours")
    num_windows = _positive_int(merged, "num_windows")
    window_size = _positive_int(merged, "window_size_hours")
    horizon = _positive_int(merged, "max_horizon_hours")
    n_bins = _positive_int(merged, "n_time_bins")
    icd_top_k = _positive_int(merged, "icd_top_k")
    chunk_rows = _positive_int(merged, "chunk_rows")

    _check(num_windows * window_size == max_hours,
           "num_windows * window_size_hours must equal max_hours "
           f"({num_windows} * {window_size} != {max_hours})")
    _check(horizon >= max_hours,
           f"max_horizon_hours ({horizon}) must be >= max_hours ({max_hours})")
    _check(n_bins >= 2, f"n_time_bins must be >= 2, got {n_bins}")

    method = _enum(merged, "discretisation_method", ("quantile", "uniform"))
    miss_thr = _fraction(merged, "missingness_threshold")
    rare_thr = _fraction(merged, "rare_category_threshold")
    rare_merge = merged["rare_category_merge"]
    _check(isinstance(rare_merge, bool), f"rare_category_merge must be a boolean, got {rare_merge!r}")
    static_imp = _enum(merged, "static_imputation", ("mean",))
    dynamic_imp = _enum(merged, "dynamic_imputation", ("zero", "forward_fill", "median"))
    scaling = _enum(merged, "scaling_method", ("zscore",))

    ratios = merged["split_ratios"]
    _check(isinstance(ratios, (list, tuple)) and len(ratios) == 3,
           f"split_ratios must be three fractions (train, val, test), got {ratios!r}")
    ratios = tuple(float(r) for r in ratios)
    _check(all(r > 0 for r in ratios),
           f"split_ratios must all be > 0, got {ratios}")
    _check(abs(sum(ratios) - 1.0) <= 1e-9,
           f"split_ratios must sum to 1.0, got sum {sum(ratios)!r}")

    seed = merged["seed"]
    _check(isinstance(seed, int) and not isinstance(seed, bool) and seed >= 0,
           f"seed must be a nonnegative integer, got {seed!r}")

    min_stay = merged["min_stay_hours"]
    _check(isinstance(min_stay, (int, float)) and not isinstance(min_stay, bool)
           and float(min_stay) >= 0.0,
           f"min_stay_hours must be a nonnegative number, got {min_stay!r}")
    min_age = merged["min_age_years"]
    _check(isinstance(min_age, int) and not isinstance(min_age, bool) and min_age >= 0,
           f"min_age_years must be a nonnegative integer, got {min_age!r}")

    modality_defaults = {
        "timeseries": True,
        "static": True,
        "icd": dataset in ("mimiciv", "mcmed"),
        "radiology": False,
    }
    modalities = dict(modality_defaults)
    if "modalities" in merged and merged["modalities"] is not None:
        user_mods = merged["modalities"]
        _check(isinstance(user_mods, dict), f"modalities must be a mapping, got {user_mods!r}")
        for key, value in user_mods.items():
            _check(key in MODALITY_NAMES, f"unknown modality flag {key!r}")
            _check(isinstance(value, bool), f"modality flag {key!r} must be a boolean")
            modalities[key] = value
    else:
        defaulted.add("modalities")

    return PipelineConfig(
        dataset_name=dataset,
        base_dir=str(merged["base_dir"]),
        output_dir=str(merged["output_dir"]),
        max_hours=max_hours,
        num_windows=num_windows,
        window_size_hours=window_size,
        max_horizon_hours=horizon,
        n_time_bins=n_bins,
        discretisation_method=method,
        missingness_threshold=miss_thr,
        rare_category_threshold=rare_thr,
        rare_category_merge=rare_merge,
        static_imputation=static_imp,
        dynamic_imputation=dynamic_imp,
        scaling_method=scaling,
        modalities=modalities,
        icd_top_k=icd_top_k,
        split_ratios=ratios,
        seed=seed,
        min_stay_hours=float(min_stay),
        min_age_years=min_age,
        radiology_embeddings=str(merged["radiology_embeddings"]),
        chunk_rows=chunk_rows,
        defaulted=frozenset(defaulted),
    )


def describe_config(cfg: PipelineConfig) -> str:
    """Deterministic human-readable dump of every effective parameter.

    Identical configs yield byte-identical summaries; fields that were filled
    from defaults are marked "(default)".
    """
    lines = []
    skip = {"defaulted"}
    for name in sorted(cfg.__dataclass_fields__):
        if name in skip:
            continue
        value = getattr(cfg, name)
        if name == "modalities":
            value = "{" + ", ".join(f"{k}={value[k]}" for k in MODALITY_NAMES) + "}"
        elif name == "split_ratios":
            value = "/".join(repr(r) for r in value)
        marker = "  (default)" if name in cfg.defaulted else ""
        lines.append(f"{name}: {value}{marker}")
    return "\n".join(lines) + "\n"


def config_fingerprint(cfg: PipelineConfig) -> str:
    """SHA-256 of the effective configuration, excluding runtime-only knobs.

    chunk_rows changes how files are streamed but never what is produced, so
    it is excluded: reruns with a different chunk size must reproduce the
    same run id and digests.
    """
    text = "\n".join(
        line for line in describe_config(cfg).splitlines()
        if not line.startswith("chunk_rows:")
    )
    return hashlib.sha256(text.encode("utf-8")).hexdigest()
