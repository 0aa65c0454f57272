"""Training loss: correlation precision, rank order, and absolute error.

The total is the sum of a linear-correlation loss, a weighted
rank-correlation loss on differentiable soft ranks, and a weighted
mean absolute error.  Correlation terms need spread; a zero-variance
batch gets the worst possible value for that term, with a warning,
rather than a NaN.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import torch

logger = logging.getLogger(__name__)

# Correlations live in [-1, 1], so 1 - corr is at worst 2.
WORST_CORRELATION_LOSS = 2.0

VARIANCE_EPS = 1e-12


def _pearson(x: torch.Tensor, y: torch.Tensor) -> torch.Tensor | None:
    """Correlation of two batches, or None when either has no spread."""
    cx = x - x.mean()
    cy = y - y.mean()
    denom = cx.norm() * cy.norm()
    if denom <= VARIANCE_EPS:
        return None
    return (cx * cy).sum() / denom


def plcc_loss(pred: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    corr = _pearson(pred, target)
    if corr is None:
        logger.warning("zero-variance batch; correlation loss pinned to worst")
        return torch.full((), WORST_CORRELATION_LOSS, dtype=pred.dtype)
    return 1.0 - corr


def soft_rank(x: torch.Tensor, temperature: float = 1.0) -> torch.Tensor:
    """Differentiable ranks: each element's rank is the sum of sigmoid
    pairwise comparisons.  The self-comparison adds a constant 0.5,
    which correlation ignores."""
    if temperature <= 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    diff = (x.unsqueeze(1) - x.unsqueeze(0)) / temperature
    return torch.sigmoid(diff).sum(dim=1)


def srcc_loss(
    pred: torch.Tensor, target: torch.Tensor, temperature: float = 1.0
) -> torch.Tensor:
    corr = _pearson(soft_rank(pred, temperature), soft_rank(target, temperature))
    if corr is None:
        logger.warning("zero-variance ranks; rank loss pinned to worst")
        return torch.full((), WORST_CORRELATION_LOSS, dtype=pred.dtype)
    return 1.0 - corr


@dataclass(frozen=True)
class LossTerms:
    total: torch.Tensor
    plcc: torch.Tensor
    srcc: torch.Tensor
    l1: torch.Tensor


def total_loss(
    pred: torch.Tensor,
    target: torch.Tensor,
    *,
    loss_lambda: float = 1.0,
    loss_gamma: float = 1.0,
    temperature: float = 1.0,
) -> LossTerms:
    """Combined loss over one batch of predicted and actual CRFs."""
    if pred.shape != target.shape or pred.ndim != 1:
        raise ValueError(
            f"pred and target must be matching 1-d batches, got "
            f"{tuple(pred.shape)} and {tuple(target.shape)}"
        )
    if pred.shape[0] < 2:
        raise ValueError("correlation terms need a batch of at least 2")
    plcc = plcc_loss(pred, target)
    srcc = srcc_loss(pred, target, temperature)
    l1 = (pred - target).abs().mean()
    total = plcc + loss_lambda * srcc + loss_gamma * l1
    return LossTerms(total=total, plcc=plcc, srcc=srcc, l1=l1)
