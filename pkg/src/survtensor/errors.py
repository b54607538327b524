"""Exception taxonomy for the preprocessing engine.

Every error raised on a user-facing path derives from PipelineError so the
CLI can report the stage and cause with a nonzero exit code instead of a
traceback.
"""


class PipelineError(Exception):
    """Base class for all engine errors."""


class ConfigSyntax(PipelineError):
    """Configuration file is not valid YAML."""


class ConfigMissing(PipelineError):
    """A required configuration key is absent."""


class ConfigInvalid(PipelineError):
    """A configuration value violates a documented constraint."""


class SpecInvalid(PipelineError):
    """Synthetic-data spec violates one of its invariants."""


class IngestMissingFile(PipelineError):
    """A raw file required for the selected dataset/modality is absent."""


class IngestSchema(PipelineError):
    """A raw file is missing a required column or has malformed structure."""


class EmptyCohort(PipelineError):
    """No stays survive the cohort filters."""


class SplitTooSmall(PipelineError):
    """Fewer than three distinct subjects; cannot form three splits."""


class SplitEmpty(PipelineError):
    """The requested ratios leave at least one split with no subjects."""


class LabelUnknownOutcome(PipelineError):
    """An outcome string has no entry in the dataset alias table."""


class GridDegenerate(PipelineError):
    """Training durations cannot support the requested discretisation."""


class GridOutOfRange(PipelineError):
    """A duration falls outside [0, H]; truncation was skipped upstream."""


class FilterEmpty(PipelineError):
    """The missingness filter would drop every dynamic feature."""


class FilterSchema(PipelineError):
    """A retained-feature list names a feature absent from the data."""


class RadiologyMisaligned(PipelineError):
    """Radiology embedding rows do not line up with the cohort stays."""


class TensorShape(PipelineError):
    """Tensor shapes or stay orders are inconsistent across inputs."""


class SerializeOverflow(PipelineError):
    """A value cannot be represented in the requested on-disk dtype."""
