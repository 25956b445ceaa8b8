"""Exception hierarchy shared by every module."""


class VoxError(Exception):
    """Base class for all voxdesk errors."""


class InvalidArgumentError(VoxError, ValueError):
    pass


class ConfigurationError(VoxError, ValueError):
    pass


class EmptyInputError(VoxError, ValueError):
    pass


class TooShortError(EmptyInputError):
    pass


class ShapeError(VoxError, ValueError):
    def __init__(self, what, expected, actual):
        super().__init__(f"{what}: expected shape {tuple(expected)}, got {tuple(actual)}")
        self.expected = tuple(expected)
        self.actual = tuple(actual)


class StateError(VoxError, RuntimeError):
    pass


class PreconditionError(VoxError, ValueError):
    pass


class TrainingDivergenceError(VoxError, FloatingPointError):
    pass


class DegenerateCentroidError(VoxError, ValueError):
    pass


class DegenerateProjectionError(VoxError, ValueError):
    pass


class ModelError(VoxError, ValueError):
    pass


class FormatError(VoxError, ValueError):
    """Malformed file; ``field`` names the offending header field when known."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class VersionError(FormatError):
    pass
