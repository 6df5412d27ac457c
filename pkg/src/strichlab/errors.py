"""Exception hierarchy shared by all strichlab modules."""


class StrichlabError(Exception):
    """Base class for every error raised by the package."""


class InvalidInputError(StrichlabError, ValueError):
    """Input data is malformed (non-finite samples, bad shapes, bad pairs)."""


class DomainError(StrichlabError, ValueError):
    """A parameter lies outside the mathematical domain of an operation."""


class RangeError(StrichlabError, ValueError):
    """Arguments fall outside the supported numerical envelope."""


class SingularSymbolError(StrichlabError, ValueError):
    """A Fourier multiplier is singular on the data (e.g. |xi|^s, s<0, at xi=0)."""


class ResolutionError(StrichlabError):
    """The discretization cannot resolve the requested quantity."""


class PreconditionError(StrichlabError, ValueError):
    """A documented precondition of an operation is violated."""


class BlowupError(StrichlabError, FloatingPointError):
    """A time stepper produced overflow or NaN.

    Attributes
    ----------
    step : int
        Index of the step at which the non-finite state was detected.
    """

    def __init__(self, message, step):
        super().__init__(f"{message} (step {step})")
        self.step = step


class ContractionFailure(StrichlabError):
    """Picard residuals grew over consecutive iterations (data too large)."""


class ConfigError(StrichlabError, ValueError):
    """An experiment configuration failed validation.

    Attributes
    ----------
    key : str
        Dotted path of the offending key, e.g. ``"params.q"``.
    """

    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key
