"""
Speaking-speed predictor and the frame budget derived from it.

FC → ReLU → LayerNorm → Dropout → FC → sigmoid, so d̂ ∈ (0, 1).
"""
import logging
import math
from typing import Tuple

import torch
from torch import nn

from ..data.schemas import SpeedStats
from ..data.speed import check_stats, denormalize_speed
from ..errors import InvalidArgumentError
from ..numerics import Rng, dropout, layer_norm, relu
from ..utils.logging import log_trace_event, setup_logger
from .blocks import Dense

logger = setup_logger(__name__)


class SpeedPredictor(nn.Module):
    """Two fully connected layers with ReLU, layer norm and dropout between them."""

    def __init__(self, d_in: int, hidden: int, dropout_rate: float, rng: Rng):
        super().__init__()
        self.fc1 = Dense(d_in, hidden, rng)
        self.fc2 = Dense(hidden, 1, rng)
        self.ln_gain = nn.Parameter(torch.ones(hidden, dtype=torch.float64))
        self.ln_bias = nn.Parameter(torch.zeros(hidden, dtype=torch.float64))
        self.dropout_rate = dropout_rate

    def forward(self, z0: torch.Tensor, rng: Rng, training: bool) -> torch.Tensor:
        return predict_speed(z0, self, rng, training)


def predict_speed(z0: torch.Tensor, params: SpeedPredictor, rng: Rng, training: bool) -> torch.Tensor:
    """
    d̂ = sigmoid(FC2(dropout(layer_norm(relu(FC1(z0)))))).

    Returns:
        Scalar tensor in (0, 1)
    """
    h = relu(params.fc1(z0))
    h = layer_norm(h, params.ln_gain, params.ln_bias)
    h = dropout(h, params.dropout_rate, rng, training)
    return torch.sigmoid(params.fc2(h)).reshape(())


def frames_from_speed(
    d_hat: float,
    l_text: int,
    stats: SpeedStats,
    max_reduction: int,
) -> Tuple[int, int]:
    """
    Frame budget at inference.

    ratio = min_ratio + d̂·(max_ratio − min_ratio); T_mel = round(ratio·L_text),
    floored at max_reduction; T_max_red = ceil(T_mel / max_reduction).

    Returns:
        (T_mel, T_max_red)
    """
    if l_text < 1:
        raise InvalidArgumentError(f"L_text must be >= 1, got {l_text}")
    check_stats(stats)
    ratio = denormalize_speed(float(d_hat), stats)
    t_mel = int(math.floor(ratio * l_text + 0.5))
    if t_mel < max_reduction:
        log_trace_event(
            logger, "speed_predictor", "clamp_frames",
            f"predicted {t_mel} frames < max reduction {max_reduction}; clamped",
            {"predicted": t_mel, "clamped": max_reduction},
            level=logging.WARNING,
        )
        t_mel = max_reduction
    return t_mel, math.ceil(t_mel / max_reduction)


def speed_loss(d: torch.Tensor, d_hat: torch.Tensor) -> torch.Tensor:
    """Mean squared error between targets and predictions over the batch."""
    d = torch.as_tensor(d, dtype=d_hat.dtype)
    return ((d - d_hat) ** 2).mean()
