"""Exception taxonomy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 1 (usage),
DataError -> 2, ArtifactError -> 3.
"""


class NextActionError(Exception):
    """Base class for all package errors."""


class ConfigError(NextActionError):
    """Invalid run configuration or command usage."""


class DataError(NextActionError):
    """Problems with event log content or derived data."""


class SchemaError(DataError):
    """Required column or field missing / malformed structure."""


class LogParseError(DataError):
    """Malformed cell value; carries the 1-based file row."""

    def __init__(self, message: str, row: int | None = None):
        super().__init__(f"row {row}: {message}" if row is not None else message)
        self.row = row


class VocabularyError(DataError):
    """Activity not present in (or inconsistent with) the vocabulary."""


class SplitError(DataError):
    """Event log cannot be partitioned as requested."""


class TerminationError(DataError):
    """Termination event already present or missing where required."""


class BoundsError(DataError, ValueError):
    """Prefix/suffix cut point outside the valid range."""


class ModelError(NextActionError):
    """Predictor-side failures."""


class TrainingError(ModelError):
    """Training diverged or could not proceed; names the failing step."""


class QueryError(NextActionError):
    """Nearest-neighbour query against an unusable index."""


class DcrError(DataError):
    """DCR graph schema or domain violation."""


class ExecutionError(DcrError):
    """Activity executed while not enabled; carries the reason."""

    def __init__(self, activity: str, reason: str):
        super().__init__(f"activity {activity!r} is not enabled: {reason}")
        self.activity = activity
        self.reason = reason


class StateError(NextActionError):
    """Operation invalid for the current case state (e.g. terminated)."""


class ArtifactError(NextActionError):
    """Missing, corrupt, or mismatched persisted artifacts."""
