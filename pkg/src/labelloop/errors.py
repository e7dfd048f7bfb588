"""Exception types shared across the package."""


class ContractError(ValueError):
    """An operation was called with arguments violating its preconditions."""


class ConfigError(ValueError):
    """Invalid model / decode configuration."""


class DeterminismError(RuntimeError):
    """Repeated runs of the same request produced different outcomes."""


class EquivalenceError(RuntimeError):
    """Two decoders that must agree produced different outcomes."""
