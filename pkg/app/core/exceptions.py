from typing import Optional


class KineticUQError(ValueError):
    """Base class for every error raised by the toolkit"""


class InvalidState(KineticUQError):
    """A physical state violates positivity, finiteness or stability guards"""

    def __init__(self, message: str, cell: Optional[int] = None):
        if cell is not None:
            message = f"{message} (cell {cell})"
        super().__init__(message)
        self.cell = cell


class NonPositiveDensity(InvalidState):
    pass


class NonPositiveTemperature(InvalidState):
    pass


class CFLViolation(InvalidState):
    pass


class StateBlowup(InvalidState):
    pass


class GridTooLarge(KineticUQError):
    pass


class GridMismatch(KineticUQError):
    pass


class UnsupportedExponent(KineticUQError):
    pass


class BlockLayoutMismatch(KineticUQError):
    pass


class BudgetExceedsRank(KineticUQError):
    pass


class IdMismatch(KineticUQError):
    pass


class SampleMismatch(KineticUQError):
    pass


class ConfigError(KineticUQError):
    pass


class ArtifactError(KineticUQError):
    """A persisted artifact (cache file, surrogate directory) is missing or unreadable"""
