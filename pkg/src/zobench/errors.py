"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid model / run / optimizer configuration."""


class NumericError(ArithmeticError):
    """A computation produced a non-finite value."""

    def __init__(self, message, where=None):
        super().__init__(message)
        self.where = where


class SimulatedOOMError(MemoryError):
    """A tracked allocation would exceed the simulated memory budget."""

    def __init__(self, message, requested=0, current=0, budget=0):
        super().__init__(message)
        self.requested = requested
        self.current = current
        self.budget = budget


class LedgerError(RuntimeError):
    """Misuse of the allocation ledger (e.g. double release)."""
