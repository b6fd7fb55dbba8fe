"""
exceptions.py
-------------

Error taxonomy shared by every module. The command-line entry point maps each
class to its exit status, so library code raises these instead of exiting.
"""


class GahneError(Exception):
    """Base class for every error this project raises on purpose."""

    exit_code = 1


class ConfigError(GahneError):
    """Invalid or inconsistent configuration (usage error)."""

    exit_code = 1


class GraphDataError(GahneError):
    """Malformed or inconsistent data files, or data incompatible with a checkpoint."""

    exit_code = 2

    def __init__(self, message: str, path: object = None, line_number: int | None = None):
        location = ""
        if path is not None:
            location = f"{path}:{line_number}: " if line_number is not None else f"{path}: "
        super().__init__(f"{location}{message}")
        self.path = path
        self.line_number = line_number


class NumericalError(GahneError):
    """Divergence, non-finite values, or a failed gradient check."""

    exit_code = 3


class ShapeError(ValueError):
    """Operand shapes do not satisfy an operation's shape rule."""
