"""Exception hierarchy shared by every stage of the pipeline."""


class VoronoiBrepError(Exception):
    """Base class for all errors raised by this package."""


class EmptyInput(VoronoiBrepError, ValueError):
    pass


class GridTooSmall(VoronoiBrepError, ValueError):
    pass


class OutOfStencil(VoronoiBrepError, IndexError):
    pass


class ResolutionMismatch(VoronoiBrepError, ValueError):
    pass


class MalformedFile(VoronoiBrepError, ValueError):
    pass


class ValueOutOfRange(VoronoiBrepError, ValueError):
    pass


class NoCells(VoronoiBrepError):
    pass


class TooFewPoints(VoronoiBrepError, ValueError):
    pass


class DegenerateConfiguration(VoronoiBrepError):
    pass


class NonConvergent(VoronoiBrepError):
    pass


class AllKindsFailed(VoronoiBrepError):
    pass


class NoModelFound(VoronoiBrepError):
    pass


class NoIntersection(VoronoiBrepError):
    pass


class InconsistentTopology(VoronoiBrepError):
    """Raised by model validation; ``violations`` lists every offending entry."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations) or "inconsistent topology")


class EmptyExtent(VoronoiBrepError, ValueError):
    pass


class ParseError(VoronoiBrepError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class SchemaMismatch(VoronoiBrepError, ValueError):
    pass


class ManifestError(VoronoiBrepError, ValueError):
    pass
