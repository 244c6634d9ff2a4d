"""Exception hierarchy shared by every wheatcast module."""


class WheatcastError(Exception):
    """Base class for all errors raised by this package."""


class InvalidParameterError(WheatcastError, ValueError):
    """A caller-supplied parameter is out of its documented range."""


class InvalidInputError(WheatcastError, ValueError):
    """Input data violates a shape, length, or consistency requirement."""


class DegenerateInputError(WheatcastError, ValueError):
    """Input is structurally valid but mathematically degenerate (zero variance, zero denominator)."""


class InsufficientDataError(WheatcastError, ValueError):
    """Not enough rows/observations for the requested operation."""


class DataFormatError(WheatcastError, ValueError):
    """An input file does not conform to the documented CSV contract."""


class InvalidStateError(WheatcastError, RuntimeError):
    """An object is used in a state it was not prepared for (stale cache, unfitted model)."""


class TrainingDivergedError(WheatcastError, RuntimeError):
    """Training produced non-finite losses or gradients."""


class IllConditionedKernelError(WheatcastError, RuntimeError):
    """Kernel matrix stayed non positive definite after jitter escalation."""


class OptimizationFailedError(WheatcastError, RuntimeError):
    """No hyperparameter candidate produced a usable fit."""


class FitFailedError(WheatcastError, RuntimeError):
    """Model estimation did not converge."""


class SelectionFailedError(WheatcastError, RuntimeError):
    """Automatic order selection found no fit that succeeds."""
