"""GRU regression head mapping per-frame features to one CRF value.

A linear layer shrinks each frame's feature vector, a GRU models the
temporal dependencies, a per-frame linear layer scores each hidden
state, and temporal hysteresis pooling aggregates the frame scores
into a single scene score: the memory term is the minimum over a
trailing window, the current term a softmin-weighted average over a
leading window, and the two are averaged per frame and then over
frames.
"""
from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn

from .features import DEFAULT_T

DEFAULT_POOLING_WINDOW = 12


@dataclass(frozen=True)
class PredictorConfig:
    """Architecture and training settings; defaults are the shipped ones."""

    feature_dim: int
    t_frames: int = DEFAULT_T
    fc_out: int = 270
    gru_hidden: int = 32
    learning_rate: float = 5e-4
    loss_lambda: float = 1.0
    loss_gamma: float = 1.0
    pooling_window: int = DEFAULT_POOLING_WINDOW

    def __post_init__(self):
        for name in ("feature_dim", "t_frames", "fc_out", "gru_hidden", "pooling_window"):
            value = getattr(self, name)
            if not isinstance(value, int) or value < 1:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.loss_lambda < 0 or self.loss_gamma < 0:
            raise ValueError("loss weights must be non-negative")


def hysteresis_pool(scores: torch.Tensor, window: int = DEFAULT_POOLING_WINDOW) -> torch.Tensor:
    """Aggregate per-frame scores into one score per sequence.

    Accepts (frames,) or (batch x frames).  Windows are clipped at the
    sequence edges.  The arithmetic is arranged so a constant input is
    a fixed point exactly: the softmin average is written as the
    current score plus weighted deviations, and the frame mean is
    centered the same way.
    """
    if window < 1:
        raise ValueError(f"pooling window must be >= 1, got {window}")
    squeeze = scores.ndim == 1
    if squeeze:
        scores = scores.unsqueeze(0)
    if scores.ndim != 2 or scores.shape[1] == 0:
        raise ValueError(
            f"scores must be a non-empty sequence, got shape {tuple(scores.shape)}"
        )
    frames = scores.shape[1]
    pooled = []
    for t in range(frames):
        past = scores[:, max(0, t - window + 1) : t + 1]
        memory = past.min(dim=1).values
        future = scores[:, t : min(frames, t + window)]
        weights = torch.softmax(-future, dim=1)
        current = scores[:, t] + (weights * (future - scores[:, t : t + 1])).sum(dim=1)
        pooled.append(0.5 * (memory + current))
    frame_scores = torch.stack(pooled, dim=1)
    scene = frame_scores[:, 0] + (frame_scores - frame_scores[:, 0:1]).mean(dim=1)
    return scene[0] if squeeze else scene


class CrfPredictor(nn.Module):
    """One independently trained predictor per target CRF."""

    def __init__(self, config: PredictorConfig):
        super().__init__()
        self.config = config
        self.reduce = nn.Linear(config.feature_dim, config.fc_out)
        self.gru = nn.GRU(config.fc_out, config.gru_hidden, batch_first=True)
        self.score = nn.Linear(config.gru_hidden, 1)
        # Start predictions mid-grid so training only moves the residual.
        nn.init.constant_(self.score.bias, 30.5)

    def forward(self, features: torch.Tensor) -> torch.Tensor:
        """(frames x dim) -> scalar, or (batch x frames x dim) -> (batch,)."""
        squeeze = features.ndim == 2
        if squeeze:
            features = features.unsqueeze(0)
        if features.ndim != 3 or features.shape[1] == 0:
            raise ValueError(
                f"features must be a non-empty sequence, got shape {tuple(features.shape)}"
            )
        if features.shape[2] != self.config.feature_dim:
            raise ValueError(
                f"feature dim {features.shape[2]} does not match the "
                f"configured {self.config.feature_dim}"
            )
        hidden, _ = self.gru(self.reduce(features))
        frame_scores = self.score(hidden).squeeze(-1)
        scene = hysteresis_pool(frame_scores, self.config.pooling_window)
        return scene[0] if squeeze else scene
