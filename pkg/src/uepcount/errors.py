"""Exception hierarchy. The CLI maps each class to an exit code."""


class UepError(Exception):
    """Base class for all library errors."""

    exit_code = 1


class DataError(UepError, ValueError):
    """Input data is malformed or violates a domain invariant."""

    exit_code = 1


class FormatVersionError(DataError):
    """A serialized file carries an unknown or incompatible format tag."""


class ParameterError(UepError, ValueError):
    """A configuration value is out of range."""

    exit_code = 2


class InfeasiblePartitionError(UepError, ValueError):
    """The requested partition cannot be built from the given counts."""

    exit_code = 3
