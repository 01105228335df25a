"""Exception hierarchy shared by every fmrnn module."""


class FmrnnError(Exception):
    """Base class for all library errors."""


class ShapeError(FmrnnError, ValueError):
    """Array dimensions do not match what an operation expects."""


class NonFiniteError(FmrnnError, ValueError):
    """A NaN or infinity showed up where finite values are required."""


class SegmentationError(FmrnnError, ValueError):
    """(d, D, S) do not describe a valid segmentation."""


class ConfigError(FmrnnError, ValueError):
    """A configuration value is out of range or inconsistent."""


class CheckpointError(FmrnnError):
    pass


class MalformedCheckpoint(CheckpointError):
    pass


class KindMismatch(CheckpointError):
    pass


class VersionMismatch(CheckpointError):
    pass


class ConfigMismatch(CheckpointError):
    """Checkpoint configuration contradicts what the caller needs."""


class DatasetError(FmrnnError):
    pass


class MissingFeatureFile(DatasetError, FileNotFoundError):
    pass


class HeaderMismatch(DatasetError):
    pass


class BadMagic(DatasetError):
    pass


class NonFiniteFeature(DatasetError, NonFiniteError):
    pass
