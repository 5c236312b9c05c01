"""
Exception hierarchy for PED.

Every error carries the process exit code the CLI should use:
2 for usage/validation problems, 3 for numerical failures.
"""

from pathlib import Path
from typing import Optional, Union


class PedError(Exception):
    """Base class for every error raised by ped_prune."""

    exit_code = 2


class ConfigError(PedError):
    """Invalid run configuration (file or flags)."""


# ============================================================================
# FILE FORMAT ERRORS
# ============================================================================

class DumpFormatError(PedError):
    """A dump, label or checkpoint file violates its format.

    Always names the file and the byte offset where the problem was found.
    """

    def __init__(self, path: Union[str, Path], offset: int, message: str):
        self.path = str(path)
        self.offset = offset
        self.message = message
        super().__init__(f"{self.path} @ byte {offset}: {message}")


class BadMagic(DumpFormatError):
    pass


class UnsupportedVersion(DumpFormatError):
    pass


class UnsupportedDtype(DumpFormatError):
    pass


class InvalidShape(DumpFormatError):
    pass


class TruncatedPayload(DumpFormatError):
    pass


class TrailingData(DumpFormatError):
    pass


class NonFiniteValue(DumpFormatError):
    pass


class CsvParseError(DumpFormatError):
    pass


class ZeroLabel(PedError):
    """Labels are 1-based; a 0 was found."""

    def __init__(self, path: Optional[Union[str, Path]] = None, offset: Optional[int] = None):
        self.path = str(path) if path is not None else None
        self.offset = offset
        where = f"{self.path} @ byte {offset}: " if self.path is not None else ""
        super().__init__(f"{where}label 0 found (labels are 1-based)")


class MissingClass(PedError):
    """A class id in 1..p has zero occurrences."""

    def __init__(self, class_id: int, path: Optional[Union[str, Path]] = None):
        self.class_id = class_id
        self.path = str(path) if path is not None else None
        where = f"{self.path}: " if self.path else ""
        super().__init__(f"{where}class {class_id} has no samples (labels must cover 1..p)")


class ProfileFormatError(PedError):
    """A JSON profile/policy could not be parsed; names the failing field."""

    def __init__(self, source: str, field: str, message: str):
        self.source = source
        self.field = field
        super().__init__(f"{source}: field '{field}': {message}")


# ============================================================================
# STATISTICS ERRORS
# ============================================================================

class LengthMismatch(PedError):
    def __init__(self, feature_n: int, label_n: int):
        self.feature_n = feature_n
        self.label_n = label_n
        super().__init__(f"feature matrix has {feature_n} rows but label vector has {label_n}")


class DimensionMismatch(PedError):
    def __init__(self, d_a: int, d_b: int):
        self.d_a = d_a
        self.d_b = d_b
        super().__init__(f"feature dimensions differ: {d_a} vs {d_b}")


class TooFewSamples(PedError):
    pass


class TooFewClasses(PedError):
    pass


class EmptyUnitList(PedError):
    pass


# ============================================================================
# CLUSTERING / SELECTION ERRORS
# ============================================================================

class BadK(PedError):
    def __init__(self, k: int, n: int):
        self.k = k
        self.n = n
        super().__init__(f"k={k} is outside 1..{n}")


class NonFiniteInput(PedError):
    pass


class TooLarge(PedError):
    pass


class InconsistentClustering(PedError):
    pass


class CannotPruneBelowOne(PedError):
    def __init__(self, active_count: int):
        self.active_count = active_count
        super().__init__(f"cannot prune {active_count} active unit(s) any further")


class ScheduleExhausted(PedError):
    pass


class AdapterFailure(PedError):
    """A model adapter failed during a PED stage."""

    def __init__(self, stage: int, cause: BaseException):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage {stage}: {cause}")
        if isinstance(cause, PedError):
            self.exit_code = cause.exit_code


# ============================================================================
# TOY NETWORK ERRORS
# ============================================================================

class ShapeMismatch(PedError):
    pass


class BadArity(PedError):
    pass


class NumericalError(PedError):
    exit_code = 3


class DivergedLoss(NumericalError):
    def __init__(self, loss: float, epoch: int, step: int, stage: Optional[int] = None):
        self.loss = loss
        self.epoch = epoch
        self.step = step
        self.stage = stage
        context = f"stage {stage}, " if stage is not None else ""
        super().__init__(f"non-finite loss {loss} at {context}epoch {epoch}, step {step}")


class GradCheckFailed(NumericalError):
    pass


