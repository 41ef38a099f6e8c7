"""
Dense-array operations with the layouts used throughout the model.

Sequences are T×C (time major). Convolution kernels are k×Cin×Cout. Every
operation is differentiable through torch autograd and deterministic given
its inputs and an explicit Rng.

GELU: the exact form x·Φ(x) (error function) is the default and is always used
in float64. The tanh approximation may be selected for float32 training; its
deviation from the exact form stays below 1e-3.
"""
import math
from typing import Optional

import torch
import torch.nn.functional as F

from ..errors import InvalidArgumentError
from .rng import Rng

LAYER_NORM_EPS = 1e-5


def gelu(x: torch.Tensor, approximate: bool = False) -> torch.Tensor:
    """GELU activation; exact erf form unless approximate (ignored for float64)."""
    if approximate and x.dtype != torch.float64:
        return F.gelu(x, approximate="tanh")
    return F.gelu(x)


def relu(x: torch.Tensor) -> torch.Tensor:
    return torch.relu(x)


def softmax_rows(m: torch.Tensor) -> torch.Tensor:
    """Row-wise softmax with max subtraction."""
    if m.dim() != 2:
        raise InvalidArgumentError(f"softmax_rows expects rank-2 input, got shape {tuple(m.shape)}")
    shifted = m - m.max(dim=1, keepdim=True).values.detach()
    e = torch.exp(shifted)
    return e / e.sum(dim=1, keepdim=True)


def average_pool_time(x: torch.Tensor, factor: int) -> torch.Tensor:
    """
    Mean-pool a T×C sequence over non-overlapping windows of `factor` frames.

    Non-divisible lengths are right-padded with zeros, so the last window mean
    includes the padding.

    Returns:
        ceil(T/factor)×C tensor
    """
    if factor < 1:
        raise InvalidArgumentError(f"pool factor must be >= 1, got {factor}")
    if factor == 1:
        return x
    t, c = x.shape
    out_len = math.ceil(t / factor)
    pad = out_len * factor - t
    if pad:
        x = torch.cat([x, x.new_zeros(pad, c)], dim=0)
    return x.reshape(out_len, factor, c).mean(dim=1)


def nearest_upsample_time(x: torch.Tensor, factor: int, target: Optional[int] = None) -> torch.Tensor:
    """
    Repeat every frame `factor` times, then truncate to `target` frames if given.
    """
    if factor < 1:
        raise InvalidArgumentError(f"upsample factor must be >= 1, got {factor}")
    out = x if factor == 1 else torch.repeat_interleave(x, factor, dim=0)
    if target is not None:
        if target > out.shape[0]:
            raise InvalidArgumentError(f"cannot truncate {out.shape[0]} frames to {target}")
        out = out[:target]
    return out


def conv1d(
    x: torch.Tensor,
    w: torch.Tensor,
    bias: Optional[torch.Tensor] = None,
    dilation: int = 1,
) -> torch.Tensor:
    """
    Same-padded 1-D convolution over time.

    Args:
        x: T×Cin input
        w: k×Cin×Cout kernel, k odd
        bias: Optional Cout vector
        dilation: Dilation factor >= 1

    Returns:
        T×Cout output
    """
    k = w.shape[0]
    if k % 2 == 0:
        raise InvalidArgumentError(f"conv1d kernel size must be odd, got {k}")
    if dilation < 1:
        raise InvalidArgumentError(f"dilation must be >= 1, got {dilation}")
    if x.shape[1] != w.shape[1]:
        raise InvalidArgumentError(f"input has {x.shape[1]} channels, kernel expects {w.shape[1]}")
    pad = dilation * (k - 1) // 2
    out = F.conv1d(
        x.t().unsqueeze(0),
        w.permute(2, 1, 0),
        bias,
        padding=pad,
        dilation=dilation,
    )
    return out[0].t()


def linear(x: torch.Tensor, w: torch.Tensor, b: Optional[torch.Tensor] = None) -> torch.Tensor:
    """x·W + b with W stored Cin×Cout."""
    out = x @ w
    if b is not None:
        out = out + b
    return out


def layer_norm(x: torch.Tensor, gain: torch.Tensor, bias: torch.Tensor) -> torch.Tensor:
    """Normalize over the last (channel) axis, then scale and shift."""
    mean = x.mean(dim=-1, keepdim=True)
    var = ((x - mean) ** 2).mean(dim=-1, keepdim=True)
    return (x - mean) / torch.sqrt(var + LAYER_NORM_EPS) * gain + bias


def dropout(x: torch.Tensor, rate: float, rng: Rng, training: bool) -> torch.Tensor:
    """Inverted dropout; identity when not training or rate == 0."""
    if not 0.0 <= rate < 1.0:
        raise InvalidArgumentError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    keep = (rng.uniform(x.shape, dtype=x.dtype) >= rate).to(x.dtype)
    return x * keep / (1.0 - rate)
