"""Exception types raised across the package.

Every error carries a stable ``code`` (the class name) which the CLI
reports in its JSON error object.
"""


class RKHSError(Exception):
    """Base class for all domain errors."""

    @property
    def code(self):
        return type(self).__name__


class DuplicatePoint(RKHSError):
    pass


class NonFiniteKernelValue(RKHSError):
    pass


class DimensionMismatch(RKHSError):
    pass


class UnknownPoint(RKHSError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class SingularGram(RKHSError):
    pass


class BadParameter(RKHSError, ValueError):
    pass


class BadConductance(RKHSError):
    pass


class Disconnected(RKHSError):
    pass


class SelfLoop(RKHSError):
    pass


class ParseError(RKHSError):
    def __init__(self, line, message):
        super().__init__(f"line {line}: {message}")
        self.line = line


class DegenerateDipole(RKHSError):
    pass


class OutOfDomain(RKHSError):
    pass


class SingularPair(RKHSError):
    pass


class TooClose(RKHSError):
    pass


class NotSymmetric(RKHSError):
    pass


class NotPositive(RKHSError):
    pass


class NotInvertible(RKHSError):
    pass


class VerificationFailed(RKHSError):
    """An internal identity check did not hold within its tolerance."""
