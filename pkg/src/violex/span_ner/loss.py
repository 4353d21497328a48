"""Binary focal loss over the span x label score matrix.

Cross-entropy treats every cell equally, which swamps the handful of gold
cells under the huge number of negative span/label pairs. Focal loss
down-weights well-classified cells by ``(1 - p_t) ** gamma`` and re-balances
the two classes with ``alpha`` (applied to positives, ``1 - alpha`` to
negatives). With ``gamma=0, alpha=0.5`` it reduces to 0.5 x mean binary
cross-entropy.
"""
from __future__ import annotations

from dataclasses import dataclass

import torch

#: Scores are clamped to [EPS, 1 - EPS] before the log so the loss stays finite.
EPS = 1e-7


@dataclass(frozen=True)
class FocalConfig:
    alpha: float = 0.75
    gamma: float = 2.0

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if self.gamma < 0.0:
            raise ValueError("gamma must be non-negative")


def focal_loss(
    scores: torch.Tensor, targets: torch.Tensor, cfg: FocalConfig = FocalConfig()
) -> torch.Tensor:
    """Mean per-cell focal loss; differentiable in the scores.

    ``scores`` holds probabilities in (0, 1), ``targets`` the binary gold
    matrix of the same shape.
    """
    if scores.shape != targets.shape:
        raise ValueError(
            f"score shape {tuple(scores.shape)} != target shape {tuple(targets.shape)}"
        )
    s = scores.clamp(EPS, 1.0 - EPS)
    t = targets.to(s.dtype)
    p_t = t * s + (1.0 - t) * (1.0 - s)
    alpha_t = t * cfg.alpha + (1.0 - t) * (1.0 - cfg.alpha)
    return (-alpha_t * (1.0 - p_t) ** cfg.gamma * p_t.log()).mean()
