"""Exception hierarchy. ``exit_code`` is what the CLI returns for each."""


class HwsegError(Exception):
    exit_code = 1


class ConfigError(HwsegError, ValueError):
    exit_code = 2


class ShapeError(HwsegError, ValueError):
    exit_code = 2


class DomainError(HwsegError, ValueError):
    exit_code = 2


class NumericError(HwsegError, ArithmeticError):
    exit_code = 4


class SynthesisError(HwsegError, RuntimeError):
    exit_code = 1


class PlacementError(SynthesisError):
    """A transformed sentence ended up entirely outside the canvas."""
