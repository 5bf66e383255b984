"""Exception hierarchy shared by all panorm modules."""


class PanormError(Exception):
    """Base class for all library errors."""


class InvalidArgument(PanormError, ValueError):
    pass


class DegenerateGeometryError(PanormError, ValueError):
    pass


class ExtrapolationError(PanormError, ValueError):
    pass


class NearNullError(PanormError, ValueError):
    """Quotient requested toward a direction where the response vanishes."""


class DegenerateWindowError(PanormError, ValueError):
    pass


class FitError(PanormError, RuntimeError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class AmbiguousRootError(PanormError, ValueError):
    def __init__(self, message, roots=()):
        super().__init__(message)
        self.roots = list(roots)


class ClusteringError(PanormError, ValueError):
    pass


class UndefinedMetricsError(PanormError, ValueError):
    pass


class SolverError(PanormError, RuntimeError):
    pass


class TightnessError(SolverError):
    """Equality power mode requested but the optimum leaves power slack."""


class InvalidScenario(PanormError, ValueError):
    pass
