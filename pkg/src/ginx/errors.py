"""Exception types shared across the package."""


class GinxError(Exception):
    """Base class for all package errors."""


class InvalidFractionError(GinxError):
    """A threshold or fraction fell outside [0, 1]."""


class MaskAlignmentError(GinxError):
    """An edge mask does not line up with its graph's edge list."""


class EmptyMaskError(GinxError):
    """Mask-level statistic requested on a graph with no edges."""


class DatasetSpecError(GinxError):
    """A dataset specification cannot be satisfied as written."""


class DatasetParseError(GinxError):
    """A dataset or mask file is malformed; message names the first bad record."""


class FormatVersionError(DatasetParseError):
    """A file declares an unsupported format version."""


class CheckpointError(GinxError):
    """A model checkpoint is corrupt or incompatible with the caller."""


class TrainingDivergedError(GinxError):
    """Training loss became non-finite."""

    def __init__(self, epoch: int, message: str = ""):
        self.epoch = epoch
        super().__init__(message or f"training diverged at epoch {epoch}")


class UnsupportedDatasetError(GinxError):
    """An operation needs ground-truth masks the dataset does not have."""


class MissingThresholdError(GinxError):
    """A curve lacks a threshold required by a downstream score."""


class ConfigError(GinxError):
    """A run configuration violates the schema; message carries the field path."""


class MissingArtifactError(GinxError):
    """A pipeline stage needs an artifact a prior command has not produced."""
