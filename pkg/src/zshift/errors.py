"""Exception hierarchy.

Input problems (bad files, mismatched grids, wrong frames) derive from
:class:`InputError`; numerical breakdowns derive from :class:`NumericalError`.
The CLI maps the two families onto exit codes 2 and 3.
"""


class ZShiftError(Exception):
    """Base class for all package errors."""


class InputError(ZShiftError, ValueError):
    pass


class ConfigError(InputError):
    pass


class GridMismatchError(InputError):
    pass


class FrameError(InputError):
    """Raised when domain, frame or kind tags of responses are incompatible."""


class TopologyError(InputError):
    pass


class NumericalError(ZShiftError, ArithmeticError):
    pass


class SingularMatrixError(NumericalError):
    def __init__(self, freq_hz: float, det: float):
        self.freq_hz = freq_hz
        self.det = det
        super().__init__(f"singular 2x2 matrix at f = {freq_hz:.6g} Hz (|det| = {det:.3e})")


class ConvergenceError(NumericalError):
    pass


class SweepError(NumericalError):
    def __init__(self, message: str, freq_hz: float | None = None):
        self.freq_hz = freq_hz
        if freq_hz is not None:
            message = f"{message} (f = {freq_hz:.6g} Hz)"
        super().__init__(message)
