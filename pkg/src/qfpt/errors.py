"""Exception hierarchy shared across the toolkit.

The CLI maps these onto process exit codes: configuration problems exit
with 1, numerical failures (non-convergence, inconsistent grids) with 2,
and Fock-space truncation violations with 3.
"""


class QfptError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(QfptError):
    """Invalid configuration: bad values, unknown keys, missing files."""

    exit_code = 1


class NumericalError(QfptError):
    """Numerical failure: optimizer did not converge, grid too coarse, ..."""

    exit_code = 2


class TruncationError(QfptError):
    """Population leaked into the top Fock level beyond the allowed cap."""

    exit_code = 3
