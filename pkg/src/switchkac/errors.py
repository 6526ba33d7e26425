"""Exception hierarchy shared by all modules."""


class SwitchKacError(Exception):
    """Base class for every error raised by the package."""


class ConfigurationError(SwitchKacError, ValueError):
    """A model, measure, grid or experiment is mis-specified."""


class DomainError(SwitchKacError, ValueError):
    """An argument lies outside the domain of a function."""


class NumericalError(SwitchKacError, ArithmeticError):
    """A numerical procedure failed to deliver a trustworthy result."""


class QuadratureError(NumericalError):
    """Successive quadrature refinements disagree beyond tolerance."""

    def __init__(self, message, coarse, fine):
        super().__init__(f"{message} (coarse={coarse!r}, fine={fine!r})")
        self.coarse = coarse
        self.fine = fine


class StabilityError(NumericalError):
    """The explicit part of a time-stepping scheme violates its step restriction."""

    def __init__(self, message, ratio):
        super().__init__(f"{message} (ratio={ratio:.4g})")
        self.ratio = ratio


class SimulationError(NumericalError):
    """A simulated path left the finite range (explosion report)."""

    def __init__(self, message, partial_path=None):
        super().__init__(message)
        self.partial_path = partial_path
