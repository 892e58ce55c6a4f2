"""Exception types shared across the package."""


class LatPruneError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(LatPruneError):
    """An input document is malformed or uses an unknown schema."""


class ValidationError(LatPruneError):
    """A parsed object violates a structural invariant."""


class SolveError(LatPruneError):
    """A solve cannot be attempted (guard tripped, bad configuration)."""
