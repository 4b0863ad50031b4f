"""Contrastive, paraphrase and negation losses and their weighted total."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ContractError, DegenerateProjectionError
from .projection import ProjectionBank, project

TAU_INIT = 1.0 / 0.07
TAU_MAX = 100.0


@dataclass(frozen=True)
class LossWeights:
    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 1.0

    def __post_init__(self):
        if min(self.alpha, self.beta, self.gamma) < 0:
            raise ContractError("loss weights must be non-negative")
        if self.alpha + self.beta + self.gamma <= 0:
            raise ContractError("loss weights must not all be zero")


VARIANTS = {
    "baseline": LossWeights(1, 0, 0),
    "paraphrase": LossWeights(1, 1, 0),
    "negation": LossWeights(1, 0, 1),
    "semclip": LossWeights(1, 1, 1),
}


class Temperature:
    """tau = exp(theta), kept in (0, tau_max]."""

    def __init__(self, tau: float = TAU_INIT, tau_max: float = TAU_MAX):
        self.tau_max = tau_max
        self.theta = Tensor(np.array([math.log(tau)]), requires_grad=True)

    @property
    def tau(self) -> float:
        return float(np.exp(self.theta.data[0]))

    def clamp(self):
        self.theta.data = np.minimum(self.theta.data, math.log(self.tau_max))


def contrastive_loss(image_embs: Tensor, text_embs: Tensor, theta: Tensor) -> Tensor:
    """Symmetric cross-entropy over S = exp(theta) * cos(image_i, text_j)."""
    image_embs, text_embs = ad.as_tensor(image_embs), ad.as_tensor(text_embs)
    n = image_embs.shape[0]
    if n == 0:
        raise ContractError("contrastive_loss needs at least one pair")
    if text_embs.shape[0] != n:
        raise ContractError(f"batch mismatch: {image_embs.shape} vs {text_embs.shape}")
    cos = ad.matmul(ad.l2_normalize(image_embs), ad.transpose(ad.l2_normalize(text_embs)))
    logits = ad.mul(cos, ad.exp(ad.as_tensor(theta)))
    targets = np.arange(n)
    rows = ad.sum(ad.cross_entropy_rows(logits, targets))
    cols = ad.sum(ad.cross_entropy_rows(ad.transpose(logits), targets))
    return ad.scale(ad.add(rows, cols), 1.0 / (2 * n))


def paraphrase_loss(p: Tensor, p_plus: Tensor) -> Tensor:
    """1 - cos(p, p+); batch mean when given N x n rows."""
    cos = ad.cosine_similarity(p, p_plus, error=DegenerateProjectionError)
    loss = 1.0 - cos
    return loss if loss.data.ndim == 0 else ad.mean(loss)


def negation_loss(p: Tensor, p_minus: Tensor) -> Tensor:
    """max(0, cos(p, p-)); batch mean when given N x n rows."""
    hinge = ad.relu(ad.cosine_similarity(p, p_minus, error=DegenerateProjectionError))
    return hinge if hinge.data.ndim == 0 else ad.mean(hinge)


@dataclass
class LossReport:
    total: float
    contrastive: float
    paraphrase: float
    negation: float
    tau: float


def total_loss(image_embs, text, text_plus, text_minus, weights: LossWeights,
               bank: ProjectionBank, theta: Tensor) -> tuple[Tensor, LossReport]:
    """Weighted mean of the three components; all three are always reported."""
    if weights.alpha + weights.beta + weights.gamma <= 0:
        raise ContractError("alpha + beta + gamma must be positive")
    l_con = contrastive_loss(image_embs, text, theta)
    p = project(text, bank)
    l_para = paraphrase_loss(p, project(text_plus, bank))
    l_neg = negation_loss(p, project(text_minus, bank))
    weighted = ad.add(ad.add(ad.scale(l_con, weights.alpha), ad.scale(l_para, weights.beta)),
                      ad.scale(l_neg, weights.gamma))
    total = ad.scale(weighted, 1.0 / (weights.alpha + weights.beta + weights.gamma))
    report = LossReport(total.item(), l_con.item(), l_para.item(), l_neg.item(),
                        float(np.exp(ad.as_tensor(theta).data.reshape(-1)[0])))
    return total, report
