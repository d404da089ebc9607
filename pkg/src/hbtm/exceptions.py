"""Exception hierarchy, mapped onto CLI exit codes by hbtm.cli."""


class HbtmError(Exception):
    """Base class for all package errors."""


class ConfigError(HbtmError):
    """Invalid or inconsistent configuration (CLI exit code 2)."""


class DataError(HbtmError):
    """Malformed or contract-violating input data (CLI exit code 3)."""


class NumericalError(HbtmError):
    """Numerical failure, e.g. a decreasing likelihood trace (CLI exit code 4)."""
