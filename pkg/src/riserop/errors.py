"""Exception types shared across the package."""


class RiseropError(Exception):
    """Base class for package errors."""


class ConfigError(RiseropError):
    """Invalid run configuration (CLI exit code 2)."""


class DataError(RiseropError):
    """Malformed or inconsistent input data (CLI exit code 3)."""


class DivergenceError(RiseropError):
    """Training loss became non-finite or blew up (CLI exit code 4)."""


class CheckpointError(DataError):
    """Checkpoint file is malformed or inconsistent with the requested use."""


class RaggedRowsError(DataError):
    """Strain-field file rows have inconsistent column counts."""


class UnsortedGridError(DataError):
    """Strain-field spatial grid is not strictly increasing."""


class NonNumericError(DataError):
    """Strain-field file contains cells that do not parse as finite numbers."""
