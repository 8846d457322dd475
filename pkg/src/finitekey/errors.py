"""Exception hierarchy shared by the bound, model and optimizer modules."""


class FiniteKeyError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(FiniteKeyError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ContractError(FiniteKeyError, ValueError):
    """Inputs are individually valid but violate a bound's usage contract,
    e.g. a security budget with the wrong number of estimated parameters."""


class EstimationError(FiniteKeyError):
    """The measured data do not allow a requested estimate (no samples)."""


class NoSinglePhotonKey(FiniteKeyError):
    """The single-photon yield bound is zero: no key can be certified.

    This is a legitimate outcome of a bound, not a malformed input; rate
    functions catch it and report a zero rate.
    """


class BoundInapplicable(FiniteKeyError):
    """The observables fall outside the regime where a bound is valid."""


class ConfigError(FiniteKeyError, ValueError):
    """Invalid run or optimizer configuration."""


class InfeasibleDesign(FiniteKeyError):
    """No point of the design box can be evaluated at all."""
