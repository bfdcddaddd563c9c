"""Shared exception types.  CLI exit codes map onto these."""


class ConfigError(ValueError):
    """Malformed or inconsistent configuration input (exit code 2)."""


class BudgetError(RuntimeError):
    """A requested computation exceeds a declared resource budget (exit code 3)."""


class CheckFailure(AssertionError):
    """A verification check was refuted at its stated tolerance (exit code 1)."""


class OutOfWindowError(ValueError):
    """An asymptotic envelope was queried outside its validity window."""
