"""Exception types shared across the package."""


class PscubError(Exception):
    """Base class for all package errors."""


class DuplicatePolymer(PscubError, ValueError):
    pass


class UnknownPolymer(PscubError, ValueError):
    pass


class UnknownPolymerInPair(UnknownPolymer):
    pass


class DisconnectedSystem(PscubError, ValueError):
    pass


class EmptyVector(PscubError, ValueError):
    pass


class TooLarge(PscubError, ValueError):
    """An exhaustive enumeration would exceed the configured cap."""


class Disconnected(PscubError, ValueError):
    pass


class DivisionByZero(PscubError, ZeroDivisionError):
    """A partition function in a denominator vanished.

    This marks a fugacity on the boundary of (or outside) the admissible
    region, so callers usually want to catch it rather than crash.
    """


class NonPositivePartitionFunction(PscubError, ValueError):
    pass


class PreconditionViolated(PscubError, ValueError):
    pass


class MissingLabels(PscubError, ValueError):
    pass


class NotSpanningTree(PscubError, ValueError):
    pass


class UnclassifiedEdge(PscubError, AssertionError):
    """An edge matched zero or several cases of an edge partition."""


class WrongKind(PscubError, ValueError):
    pass


class NoIncompatibleNeighbour(PscubError, ValueError):
    pass


class TruncationExceeded(PscubError, ValueError):
    pass


class OutOfRange(PscubError, ValueError):
    pass


class UnknownPair(PscubError, KeyError):
    pass


class ParseError(PscubError, ValueError):
    pass


class NotConverged(PscubError, RuntimeError):
    """A numerical continuation lost track of its solution branch."""


class NonUnimodal(UserWarning):
    """Emitted when a ratio scan is not unimodal and a grid fallback is used."""
