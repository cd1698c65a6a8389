"""Exception types shared across the package.

The split mirrors how failures are reported at the command line: configuration
problems, numerical breakdowns, and file-format problems map to distinct exit
codes.
"""


class ConfigError(ValueError):
    """Bad configuration value, unknown key, or inconsistent options."""


class NumericError(RuntimeError):
    """Base class for failures of the numerical machinery."""


class SingularMatrixError(NumericError):
    """Linear system could not be solved even after pivoting."""


class SolverDivergenceError(NumericError):
    """Nonlinear boundary iteration failed to reach tolerance."""


class StateInvariantError(NumericError):
    """A simulation field left its admissible range."""


class FileFormatError(OSError):
    """Base class for problems with binary weight/sample files."""


class CorruptFileError(FileFormatError):
    """Bad magic, truncation, or checksum mismatch."""


class FormatVersionError(FileFormatError):
    """File declares a format version this build does not understand."""


class ShapeMismatchError(FileFormatError):
    """Stored array shapes do not match the expected architecture."""
