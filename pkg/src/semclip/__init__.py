"""Contrastive image-text training with a projection subspace that pulls
paraphrases together and pushes negations apart, on a synthetic scene corpus.
"""
from ._kernels import BACKEND
from .errors import (
    ContractError, DataError, DegenerateProjectionError, DegenerateVectorError, DimensionError,
    IncompatibleCheckpointError, NumericError, SemClipError, VocabularyError,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "ContractError", "DataError", "DegenerateProjectionError", "DegenerateVectorError",
    "DimensionError", "IncompatibleCheckpointError", "NumericError", "SemClipError", "VocabularyError",
    "__version__",
]
