"""Shared exception types, mapped to CLI exit codes in cli.py."""


class ContractViolation(ValueError):
    """An operation was called with inputs that break its contract."""


class DataError(ValueError):
    """Input files or datasets are missing, malformed, or inconsistent."""


class IllPosedFit(DataError):
    """A least-squares fit is rank deficient / underdetermined."""


class NumericalFailure(RuntimeError):
    """A computation produced non-finite values (e.g. NaN training loss)."""
