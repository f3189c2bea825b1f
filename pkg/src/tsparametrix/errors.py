"""Exception types shared across the package."""


class TsParametrixError(Exception):
    """Base class; ``context`` carries machine-readable diagnostics."""

    def __init__(self, message, **context):
        super().__init__(message)
        self.context = context


class ConfigurationError(TsParametrixError, ValueError):
    """Invalid model, coefficients or run configuration."""


class QuadratureError(TsParametrixError, ArithmeticError):
    """A quadrature did not reach its tolerance; ``estimate`` is the error estimate."""

    def __init__(self, message, estimate=float("nan"), **context):
        super().__init__(message, estimate=estimate, **context)
        self.estimate = estimate


class ResolutionError(TsParametrixError):
    """A grid is too coarse or too narrow for the requested computation."""


class FlowIntegrationError(TsParametrixError, FloatingPointError):
    """Non-finite state while integrating the drift ODE."""


class PrecisionError(TsParametrixError):
    """A local error estimate exceeded its tolerance."""


class DivergenceError(TsParametrixError):
    """The parametrix series norms stopped decaying."""

    def __init__(self, message, norms=(), **context):
        super().__init__(message, norms=list(norms), **context)
        self.norms = list(norms)


class SimulationError(TsParametrixError):
    """Too many Monte Carlo paths had to be discarded."""


class AssumptionError(ConfigurationError):
    """The standing assumptions failed for a model/coefficient pair; ``report`` holds the checks."""

    def __init__(self, message, report=None, **context):
        super().__init__(message, **context)
        self.report = report
