"""Orthonormal projection bank and the projection map p(t) = V^T t."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from . import autodiff as ad
from .autodiff import Tensor
from .errors import ContractError, DegenerateProjectionError

log = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-8


def orthonormalize(a: np.ndarray, rng: np.random.Generator, tol: float = RESIDUAL_TOL,
                   max_resamples: int = 100) -> tuple[np.ndarray, list[int]]:
    """Gram-Schmidt on the columns of ``a``; collapsed columns are redrawn from ``rng``.

    Returns the orthonormal matrix and the indices of resampled columns.
    """
    a = np.array(a, dtype=np.float64, copy=True)
    resampled = []
    for _ in range(max_resamples + 1):
        q, bad = _kernels.gram_schmidt(np.ascontiguousarray(a), tol)
        if bad < 0:
            return q, resampled
        a[:, bad] = rng.standard_normal(a.shape[0])
        resampled.append(int(bad))
    raise DegenerateProjectionError(f"could not orthonormalize after {max_resamples} resamples")


@dataclass
class ProjectionBank:
    V: Tensor
    normalize: bool = False
    learnable: bool = False
    seed: int = 0
    rng: np.random.Generator = field(default=None, repr=False)

    @property
    def d(self) -> int:
        return self.V.shape[0]

    @property
    def n(self) -> int:
        return self.V.shape[1]

    def orthonormality_error(self) -> float:
        v = self.V.data
        return float(np.max(np.abs(v.T @ v - np.eye(self.n))))


def init_projection_bank(d: int, n: int, seed: int, normalize: bool = False,
                         learnable: bool = False) -> ProjectionBank:
    if not 0 < n < d:
        raise ContractError(f"projection bank needs 0 < n < d, got n={n}, d={d}")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xB4]))
    raw = rng.standard_normal((d, n))
    q, _ = orthonormalize(raw, rng)
    return ProjectionBank(Tensor(q, requires_grad=learnable), normalize, learnable, seed, rng)


def bank_from_columns(columns: np.ndarray, normalize=False, learnable=False, seed=0) -> ProjectionBank:
    """Bank from explicit raw columns (orthonormalized, not redrawn)."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xB4]))
    q, _ = orthonormalize(columns, rng)
    return ProjectionBank(Tensor(q, requires_grad=learnable), normalize, learnable, seed, rng)


def project(t: Tensor, bank: ProjectionBank) -> Tensor:
    """p(t) for a vector (length n) or for each row of a matrix (N x n)."""
    t = ad.as_tensor(t)
    if t.data.ndim == 1:
        return ad.reshape(project(ad.reshape(t, (1, t.shape[0])), bank), (bank.n,))
    p = ad.matmul(t, bank.V)
    if bank.normalize:
        p = ad.l2_normalize(p, error=DegenerateProjectionError)
    return p


def reorthonormalize(bank: ProjectionBank) -> list[int]:
    """Restore orthonormal columns in place after an optimizer step.

    Returns the indices of any columns that collapsed and were redrawn.
    """
    if not bank.learnable:
        raise ContractError("reorthonormalize is only defined for learnable banks")
    q, resampled = orthonormalize(bank.V.data, bank.rng)
    if resampled:
        log.warning("projection bank: resampled collapsed column(s) %s", resampled)
    bank.V.data = q.astype(bank.V.data.dtype)
    return resampled
