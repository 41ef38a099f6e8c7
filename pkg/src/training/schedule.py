"""Transformer-style learning-rate schedule."""
import math

from ..errors import InvalidArgumentError


def lr_schedule(step: int, warmup: int, max_lr: float) -> float:
    """
    Linear warmup to max_lr at step == warmup, then inverse-sqrt decay.

    lr = max_lr · min(step / warmup, sqrt(warmup / step))
    """
    if step < 1:
        raise InvalidArgumentError(f"step must be >= 1, got {step}")
    if warmup < 1:
        raise InvalidArgumentError(f"warmup must be >= 1, got {warmup}")
    return max_lr * min(step / warmup, math.sqrt(warmup / step))
