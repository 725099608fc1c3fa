"""Exception types raised across the package."""


class BicforgeError(Exception):
    """Base class for every error raised by bicforge."""


class EmptySupport(BicforgeError):
    pass


class ProbabilitySumMismatch(BicforgeError):
    pass


class InfeasibleInstance(BicforgeError):
    pass


class NotXOS(BicforgeError):
    pass


class NotDownwardClosed(BicforgeError):
    pass


class NotSingleParameter(BicforgeError):
    pass


class NumericFailure(BicforgeError):
    pass


class EnumerationTooLarge(BicforgeError):
    pass


class InvalidEpsilon(BicforgeError):
    pass


class ZeroProbabilityType(BicforgeError):
    pass


class TooManyItems(BicforgeError):
    pass


class NoRandomnessDomain(BicforgeError):
    """A randomized algorithm cannot be integrated exactly."""
