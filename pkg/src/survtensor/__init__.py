"""survtensor: configuration-driven, memory-bounded preprocessing of raw EHR
CSV exports into standardised survival-analysis tensors, with a deterministic
synthetic-data generator that makes the whole pipeline verifiable."""

__version__ = "0.1.0"

from .config import PipelineConfig, config_from_dict, describe_config, load_config  # noqa: E402,F401
from .synthgen import SyntheticSpec, generate  # noqa: E402,F401
