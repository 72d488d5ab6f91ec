"""Exception types shared across the package."""


class ArchSearchError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(ArchSearchError):
    """Tensor shapes are inconsistent with the architecture or each other."""


class UndefinedScoreError(ArchSearchError):
    """A metric is undefined for the given inputs (e.g. constant targets)."""


class TrainingDivergedError(ArchSearchError):
    """Training produced a non-finite loss or non-finite parameters."""


class DataError(ArchSearchError):
    """Dataset construction, parsing or splitting failed."""


class ConfigError(ArchSearchError):
    """A run configuration is invalid."""


class AllTrialsFailedError(ArchSearchError):
    """Every trial of an iteration failed; carries the partial report."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report
