"""Error taxonomy shared across the package.

The CLI maps these onto process exit codes: ConfigError -> 2,
DependencyError -> 3, InputError / ShapeError / GeometryError -> 4.
"""


class AbmatError(Exception):
    """Base class for all package errors."""


class ShapeError(AbmatError):
    """Array dimensions do not satisfy an operation's contract."""


class GeometryError(AbmatError):
    """A crop box or paste target falls outside the source bounds."""


class InputError(AbmatError):
    """Empty or otherwise unusable input data."""


class DegenerateRegionError(InputError):
    """No background region available (alpha is 1 everywhere)."""


class ConfigError(AbmatError):
    """Malformed or unknown configuration keys/values."""


class DependencyError(AbmatError):
    """A required artifact (checkpoint, clip directory) is missing."""
