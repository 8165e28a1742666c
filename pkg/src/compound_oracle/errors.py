"""Exception hierarchy shared by every module."""


class OracleError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(OracleError, ValueError):
    """A parameter lies outside the family's parameter space."""


class ContractError(OracleError, ValueError):
    """Inputs violate a documented precondition (shapes, lengths, counts)."""


class CapacityError(OracleError):
    """Problem size exceeds a hard-coded desk-scale wall."""


class ConfigError(ContractError):
    """An experiment configuration failed schema or semantic validation."""
