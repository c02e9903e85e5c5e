"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Tensor or grid extents violate an operation's contract."""


class ContractError(ValueError):
    """A documented precondition was violated (e.g. empty click set)."""


class PositionError(ValueError):
    """A voxel position lies outside the volume bounds."""


class GradientError(RuntimeError):
    """Misuse of the reverse-mode machinery (e.g. double backward)."""


class DivergenceError(RuntimeError):
    """Non-finite values encountered during optimization."""


class SpecError(ValueError):
    """An infeasible synthetic-data specification."""


class FormatError(ValueError):
    """A binary file does not conform to its declared format."""


class ConfigError(ValueError):
    """A run configuration file contains unknown keys or bad values."""
