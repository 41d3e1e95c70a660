"""Exception hierarchy shared by the engines and the command line."""


class SuperradianceError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(SuperradianceError, ValueError):
    """A quantity was requested outside the domain where it is defined."""


class ResourceError(SuperradianceError, MemoryError):
    """A computation would exceed a configured size cap."""


class NumericalError(SuperradianceError, ArithmeticError):
    """A numerical procedure cannot produce a finite, meaningful result."""


class DegenerateDesignError(NumericalError):
    """The least-squares design matrix is rank deficient."""
