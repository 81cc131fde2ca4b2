"""Exception hierarchy shared by all modules."""


class KoopmanError(Exception):
    """Base class for every error raised by :mod:`noisykoop`."""


class ContractViolation(KoopmanError, ValueError):
    """An argument broke a documented precondition (shape, length, range)."""


class InsufficientDataError(ContractViolation):
    pass


class DivergenceError(KoopmanError):
    """Integration produced a non-finite state.

    Attributes:
        step: index of the first non-finite sample.
    """

    def __init__(self, message, step):
        super().__init__(message)
        self.step = step


class NumericalSingularityError(KoopmanError):
    """A matrix that must be inverted is singular or too ill-conditioned."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class DegenerateDataError(KoopmanError):
    """Data or sufficient statistics carry no usable information."""


class EMError(KoopmanError):
    """Failure inside an EM iteration, annotated with the iteration index."""

    def __init__(self, message, iteration):
        super().__init__(f"EM iteration {iteration}: {message}")
        self.iteration = iteration


class ConfigError(KoopmanError, ValueError):
    pass
