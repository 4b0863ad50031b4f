"""Exception hierarchy shared across the package."""


class SemClipError(Exception):
    """Base class for all package errors."""


class ContractError(SemClipError, ValueError):
    """A documented precondition was violated."""


class DimensionError(ContractError):
    pass


class DegenerateVectorError(SemClipError, ArithmeticError):
    """A vector (or projection) had norm too small to normalize."""


class DegenerateProjectionError(DegenerateVectorError):
    pass


class VocabularyError(SemClipError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else ""


class DataError(SemClipError):
    """Unreadable, corrupted or incompatible dataset / checkpoint."""


class NumericError(SemClipError, FloatingPointError):
    """Non-finite loss or gradient during training."""


class IncompatibleCheckpointError(DataError):
    """Checkpoint was written under a different vocabulary."""
