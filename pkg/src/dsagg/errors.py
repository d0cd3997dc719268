"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """A spec/config object is malformed or names unsupported parameters."""


class ContractViolation(ValueError):
    """An operation was called outside its documented precondition."""


class ExistenceError(RuntimeError):
    """A model's second-order existence condition fails at the requested point."""


class DivergenceError(RuntimeError):
    """A recursive simulation exceeded the numeric guard."""


class ResourceLimitError(RuntimeError):
    """An exact computation would exceed the configured pair/size budget."""
