"""Exception types raised by the blackout risk engine.

Input problems derive from ValueError and runtime failures from RuntimeError,
so the CLI can map them to exit codes 2 and 3 respectively.
"""


class ValidationError(ValueError):
    """A case, configuration or argument violates an invariant."""


class ParseError(ValidationError):
    """A case or data file could not be parsed."""


class DomainError(ValidationError):
    """A numeric argument lies outside the domain of a formula."""


class NotMinimalizable(ValueError):
    """A branch pair already causes a blackout, so no superset is minimal."""


class InsufficientData(ValueError):
    """The ledger holds no discoveries of the requested order."""


class Unstable(ValueError):
    """The most frequent branch pair changed inside the stability window."""


class MissingSetSize(ValueError):
    """A malignancy order is present in the ledger without a set-size policy."""


class EmptyLedger(ValueError):
    """An analysis was requested on a ledger with no discoveries."""


class InfeasibleDispatch(RuntimeError):
    """Load cannot be served by the available generation."""


class SingularSystem(RuntimeError):
    """The reduced susceptance matrix of an island is singular."""


class IterationLimit(RuntimeError):
    """A cascade did not reach equilibrium within the iteration limit."""


class NotRepairable(RuntimeError):
    """Covariance repair would distort correlations beyond tolerance."""


class ToleranceNotMet(RuntimeError):
    """Numerical integration did not reach the requested accuracy."""
