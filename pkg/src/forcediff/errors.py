"""Exception hierarchy shared across the package.

Every error class carries a distinct ``exit_code`` so the CLI can map
failures to process exit statuses without string matching.
"""


class ForceDiffError(Exception):
    exit_code = 1


class GeometryError(ForceDiffError, ValueError):
    """Degenerate or non-normalized rotation input."""

    exit_code = 10


class ForceLimitError(ForceDiffError, ValueError):
    exit_code = 11


class ControllerError(ForceDiffError):
    """Admittance integration left its safe envelope."""

    exit_code = 12


class InterpolationError(ForceDiffError, ValueError):
    exit_code = 13


class RetargetError(ForceDiffError):
    exit_code = 14


class EnvironmentFault(ForceDiffError):
    """The simulated world was driven into an unrealistic state."""

    exit_code = 15


class DemoTimeout(ForceDiffError):
    exit_code = 16


class TrainingError(ForceDiffError):
    """Non-finite loss or similar numerical breakdown during training."""

    exit_code = 17


class GradientCheckError(ForceDiffError):
    """An analytic gradient disagrees with finite differences."""

    exit_code = 18


class EpisodeFailure(ForceDiffError):
    """A single requested rollout ended without success."""

    exit_code = 19


class ConfigError(ForceDiffError, ValueError):
    exit_code = 20


class ResourceError(ForceDiffError):
    """Input file missing or unreadable, or output not writable."""

    exit_code = 21


class FormatError(ForceDiffError):
    """Base class for container read failures."""

    exit_code = 30


class BadMagicError(FormatError):
    exit_code = 31


class VersionMismatchError(FormatError):
    exit_code = 32


class TruncatedFileError(FormatError):
    exit_code = 33

    def __init__(self, offset: int, needed: int, available: int):
        self.offset, self.needed, self.available = offset, needed, available
        super().__init__(
            f"file truncated at offset {offset}: needed {needed} bytes, {available} available"
        )


class DimensionMismatchError(FormatError):
    exit_code = 34


class CorruptRecordError(FormatError):
    """Record content violates an invariant (non-finite, bad timestamps, ...)."""

    exit_code = 35
