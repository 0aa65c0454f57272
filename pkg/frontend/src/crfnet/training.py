"""Seeded training loop for one CRF target, plus weight files.

Each target gets its own independently trained predictor on the same
features.  Training is full-precision CPU Adam over small shuffled
batches; a non-finite loss aborts with the recent history attached.
"""
from __future__ import annotations

import logging
import os
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from .features import FeatureSequence
from .losses import total_loss
from .model import CrfPredictor, PredictorConfig

logger = logging.getLogger(__name__)

WEIGHTS_FORMAT = "crf-predictor-weights"
WEIGHTS_VERSION = 1

Sample = tuple[FeatureSequence | torch.Tensor, float]


class TrainingDiverged(RuntimeError):
    """Loss went non-finite; carries the tail of the loss history."""

    def __init__(self, message: str, history: Sequence[float]):
        super().__init__(message)
        self.history = tuple(history)


@dataclass(frozen=True)
class TrainResult:
    model: CrfPredictor
    config: PredictorConfig
    target: str
    epoch_losses: tuple[float, ...]


def _as_tensor(sample: FeatureSequence | torch.Tensor) -> torch.Tensor:
    data = sample.data if isinstance(sample, FeatureSequence) else sample
    if data.ndim != 2:
        raise ValueError(
            f"each sample must be (frames x dim), got {tuple(data.shape)}"
        )
    return data.to(torch.float32)


def _batches(order: np.ndarray, batch_size: int) -> list[np.ndarray]:
    chunks = [order[i : i + batch_size] for i in range(0, len(order), batch_size)]
    # A singleton tail has no spread for the correlation terms; fold it
    # into the previous batch.
    if len(chunks) > 1 and len(chunks[-1]) < 2:
        chunks[-2] = np.concatenate([chunks[-2], chunks[-1]])
        chunks.pop()
    return chunks


def train(
    samples: Sequence[Sample],
    config: PredictorConfig,
    *,
    target: str = "crf",
    epochs: int = 500,
    batch_size: int = 2,
    seed: int = 0,
) -> TrainResult:
    """Fit one predictor; fixed seed gives an identical loss curve."""
    if len(samples) < 2:
        raise ValueError(f"training needs at least 2 samples, got {len(samples)}")
    if epochs < 1 or batch_size < 2:
        raise ValueError("epochs must be >= 1 and batch_size >= 2")
    features = torch.stack([_as_tensor(f) for f, _ in samples])
    if features.shape[2] != config.feature_dim:
        raise ValueError(
            f"sample feature dim {features.shape[2]} does not match the "
            f"configured {config.feature_dim}"
        )
    targets = torch.tensor([float(t) for _, t in samples], dtype=torch.float32)

    torch.manual_seed(seed)
    model = CrfPredictor(config)
    optimizer = torch.optim.Adam(model.parameters(), lr=config.learning_rate)
    shuffle = np.random.default_rng(seed)

    epoch_losses: list[float] = []
    for epoch in range(epochs):
        order = shuffle.permutation(len(samples))
        batch_losses = []
        for batch in _batches(order, batch_size):
            index = torch.from_numpy(batch)
            optimizer.zero_grad()
            pred = model(features.index_select(0, index))
            terms = total_loss(
                pred,
                targets.index_select(0, index),
                loss_lambda=config.loss_lambda,
                loss_gamma=config.loss_gamma,
            )
            if not torch.isfinite(terms.total):
                raise TrainingDiverged(
                    f"loss became non-finite at epoch {epoch} "
                    f"(plcc={float(terms.plcc.detach()):.4g}, "
                    f"srcc={float(terms.srcc.detach()):.4g}, "
                    f"l1={float(terms.l1.detach()):.4g})",
                    epoch_losses[-10:],
                )
            terms.total.backward()
            optimizer.step()
            batch_losses.append(float(terms.total.detach()))
        epoch_losses.append(sum(batch_losses) / len(batch_losses))
    return TrainResult(
        model=model.eval(),
        config=config,
        target=target,
        epoch_losses=tuple(epoch_losses),
    )


def mean_absolute_error(model: CrfPredictor, samples: Sequence[Sample]) -> float:
    """Training-set MAE in CRF units."""
    features = torch.stack([_as_tensor(f) for f, _ in samples])
    targets = torch.tensor([float(t) for _, t in samples], dtype=torch.float32)
    with torch.no_grad():
        pred = model(features)
    return float((pred - targets).abs().mean())


def predict_value(model: CrfPredictor, sample: FeatureSequence | torch.Tensor) -> float:
    """One scene's raw (unrounded) predicted CRF."""
    with torch.no_grad():
        return float(model(_as_tensor(sample)))


def save_model(result: TrainResult, path: Path | str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "format": WEIGHTS_FORMAT,
        "version": WEIGHTS_VERSION,
        "target": result.target,
        "config": asdict(result.config),
        "state_dict": result.model.state_dict(),
    }
    tmp = path.with_suffix(path.suffix + ".tmp")
    torch.save(payload, tmp)
    os.replace(tmp, path)
    return path


def load_model(path: Path | str) -> TrainResult:
    payload = torch.load(path, map_location="cpu", weights_only=True)
    if payload.get("format") != WEIGHTS_FORMAT:
        raise ValueError(f"unrecognized weights format {payload.get('format')!r}")
    if payload.get("version") != WEIGHTS_VERSION:
        raise ValueError(f"unsupported weights version {payload.get('version')!r}")
    config = PredictorConfig(**payload["config"])
    model = CrfPredictor(config)
    model.load_state_dict(payload["state_dict"])
    return TrainResult(
        model=model.eval(),
        config=config,
        target=str(payload["target"]),
        epoch_losses=(),
    )
