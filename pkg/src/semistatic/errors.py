"""Exception hierarchy shared across the package."""


class SemistaticError(Exception):
    """Base class for all errors raised by this package."""


class SchemaError(SemistaticError, ValueError):
    """Malformed market or utility input."""


class ProbabilityError(SchemaError):
    """Branch probabilities are not a valid conditional distribution."""


class ArbitrageError(SemistaticError):
    """The market (or the quoted derivative price) admits an arbitrage."""


class InfeasibleError(SemistaticError):
    """A constraint system has no solution."""


class UnboundedError(SemistaticError):
    """An optimization problem or polytope is unbounded."""


class NumericalError(SemistaticError):
    """A solver failed to converge or hit its iteration cap."""


class DimensionError(SemistaticError, ValueError):
    """Incompatible vector or matrix dimensions."""
