"""Exception hierarchy shared by the solvers and the command line."""


class MREError(Exception):
    """Base class for all errors raised by :mod:`mre`."""


class ValidationError(MREError, ValueError):
    """Inputs violate a documented invariant (shape, symmetry, definiteness)."""


class InfeasibleViewsError(MREError):
    """The views cannot be met by any distribution of the required form."""


class ConvergenceError(MREError):
    """An iterative routine hit its iteration cap.

    The partial trace, when available, is kept on ``trace``.
    """

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class SamplerTuningError(MREError):
    """The HMC sampler accepted too few proposals to be trusted."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
