"""Exception types shared across the package."""


class MotlineError(Exception):
    """Base class for all library errors."""


class InputError(MotlineError):
    """Malformed or out-of-contract input (bad lengths, negative weights, ...)."""


class ParseError(InputError):
    """Unreadable or schema-violating input file."""


class ConvexOrderError(MotlineError):
    """Marginals are not in convex order / martingale polytope is empty."""


class SizeGuardError(MotlineError):
    """A brute-force routine was called beyond its instance-size guard."""


class InternalError(MotlineError):
    """A certified invariant failed at runtime; indicates a defect, not bad input."""
