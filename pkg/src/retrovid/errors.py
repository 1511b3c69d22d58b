"""Exception types shared across the toolkit.

Each class carries a distinct process exit code so CLI failures are
machine-distinguishable.
"""


class RetroError(Exception):
    """Base class for all toolkit errors."""

    exit_code = 1


class ValidationError(RetroError):
    """Malformed data: tensors, files, manifests, maps, or logs."""

    exit_code = 2


class ConfigurationError(RetroError):
    """Bad option values or unknown identifiers."""

    exit_code = 3


class IncompleteLogError(RetroError):
    """A prediction log lacks entries required by the requested computation."""

    exit_code = 4

    def __init__(self, message, video_ids=()):
        super().__init__(message)
        self.video_ids = list(video_ids)


class UndefinedMetricError(RetroError):
    """A statistic was requested over an empty or undefined population."""

    exit_code = 5


class EmptySplitError(RetroError):
    """A dataset split construction found nothing to build from."""

    exit_code = 6
