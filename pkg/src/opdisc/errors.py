"""Exception hierarchy shared across the package."""


class OpdiscError(Exception):
    """Base class for all package errors."""


class ShapeError(OpdiscError, ValueError):
    """Matrices or vectors with inconsistent dimensions."""


class InvalidChannelError(OpdiscError, ValueError):
    """A Kraus list that is not completely positive and trace preserving."""


class NotUnitaryError(OpdiscError, ValueError):
    pass


class DomainError(OpdiscError, ValueError):
    """An argument lies outside the domain where a quantity is defined."""


class NotDistinguishableError(DomainError):
    """The channel cannot be perfectly discriminated from the identity."""


class DegenerateGeometryError(DomainError):
    pass


class InfeasibleTransformError(OpdiscError, ValueError):
    """No CPTP map sends the given source pair to the given target pair."""


class OptimizerError(OpdiscError, RuntimeError):
    """Every local search failed to converge.

    The best value found is kept on ``best_value`` for diagnostics.
    """

    def __init__(self, message: str, best_value: float):
        super().__init__(f"{message} (best value found: {best_value:.12g})")
        self.best_value = best_value


class SynthesisError(OpdiscError, RuntimeError):
    """A discrimination protocol could not be assembled."""


class NumericalStallError(SynthesisError):
    pass


class ChannelFileError(OpdiscError, ValueError):
    """Malformed channel or plan file; ``location`` points at the offending element."""

    def __init__(self, message: str, location: str = ""):
        text = f"{location}: {message}" if location else message
        super().__init__(text)
        self.location = location
