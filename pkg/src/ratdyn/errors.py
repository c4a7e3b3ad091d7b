"""Exception hierarchy.

Every error raised on purpose by the library derives from ``RatDynError``.
Input problems additionally derive from ``ValidationError`` so the command
line front end can map them to exit code 2; everything else maps to 1.
"""


class RatDynError(Exception):
    """Base class for library errors."""


class ValidationError(RatDynError, ValueError):
    """Bad user input (shapes, ranges, unknown names)."""


class BadDegree(ValidationError):
    pass


class BadSpec(ValidationError):
    pass


class DegenerateMap(RatDynError):
    """Resultant of the homogeneous lift vanishes (common factor)."""


class RootFindingFailure(RatDynError):
    pass


class ExceptionalAnchor(RatDynError):
    """Backward sampling started from a totally invariant point."""


class CriticalCollision(RatDynError):
    """An orbit hit the critical set where a nonzero derivative is required."""


class HorizonExceeded(RatDynError):
    """A bound period was still open when the scan horizon ran out."""


class NotNearCritical(RatDynError):
    pass


class ScanCapExceeded(RatDynError):
    pass


class NoFiniteKappa(RatDynError):
    """Critical points collide (or are multiple) inside the parameter box."""


class NoSamples(RatDynError):
    pass


class TailUnbounded(RatDynError, UserWarning):
    """No CE fit available: the tau-series tail bound is infinite (issued as a warning)."""


class NotPeriodic(RatDynError):
    pass


class MotionBreakdown(RatDynError):
    def __init__(self, message, last_good=None):
        super().__init__(message)
        self.last_good = last_good


class NoCertificate(RatDynError):
    pass


class DegenerateTransversality(RatDynError):
    pass


class NoAdmissibleTimes(RatDynError):
    pass
