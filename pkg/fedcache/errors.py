from __future__ import annotations


class FedCacheError(Exception):
    """Base class for every error raised by the simulator."""


class ConfigError(FedCacheError, ValueError):
    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"Invalid value for '{field}': {message}")


class NoParticipantsError(FedCacheError, ValueError):
    """Raised when an aggregation set holds no updates at all."""


class DimensionMismatchError(FedCacheError, ValueError):
    pass


class NonFiniteError(FedCacheError, ArithmeticError):
    pass


class RoundOrderError(FedCacheError, ValueError):
    pass


class IncompleteTableError(FedCacheError, ValueError):
    def __init__(self, missing: list[tuple]):
        self.missing = list(missing)
        listing = ", ".join(f"(policy={p}, tau={t}, capacity={c})" for p, t, c in self.missing)
        super().__init__(f"Result table is missing {len(self.missing)} cell(s): {listing}")


class ReportError(FedCacheError, OSError):
    def __init__(self, path, cause: Exception):
        self.path = path
        self.cause = cause
        super().__init__(f"Could not write report to '{path}': {cause}")
