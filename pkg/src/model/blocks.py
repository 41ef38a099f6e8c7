"""
Parameterized layers and residual blocks.

Layers store weights in the layouts of src.numerics (Cin×Cout for dense,
k×Cin×Cout for convolutions) and are initialized from an explicit Rng.
"""
import math
from typing import List, Optional, Sequence

import torch
from torch import nn

from ..numerics import Rng, conv1d, gelu, linear


class Dense(nn.Module):
    """Affine map x·W + b."""

    def __init__(self, d_in: int, d_out: int, rng: Rng, scale: float = 1.0, bias: bool = True):
        super().__init__()
        std = scale / math.sqrt(d_in)
        self.weight = nn.Parameter(rng.normal((d_in, d_out)) * std)
        self.bias = nn.Parameter(torch.zeros(d_out, dtype=torch.float64)) if bias else None

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return linear(x, self.weight, self.bias)


class TimeConv(nn.Module):
    """Same-padded convolution over time, T×Cin → T×Cout."""

    def __init__(
        self,
        c_in: int,
        c_out: int,
        kernel: int,
        rng: Rng,
        dilation: int = 1,
        scale: float = 1.0,
    ):
        super().__init__()
        std = scale / math.sqrt(kernel * c_in)
        self.weight = nn.Parameter(rng.normal((kernel, c_in, c_out)) * std)
        self.bias = nn.Parameter(torch.zeros(c_out, dtype=torch.float64))
        self.dilation = dilation

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return conv1d(x, self.weight, self.bias, self.dilation)


class ConvStack(nn.Module):
    """
    Convolutions each preceded by GELU: conv(gelu(x)) repeated.

    Args:
        channels: [c_in, c_1, ..., c_out]
        kernels: one kernel size per convolution
        dilations: optional dilation per convolution
        out_scale: init scale of the last convolution
    """

    def __init__(
        self,
        channels: Sequence[int],
        kernels: Sequence[int],
        rng: Rng,
        dilations: Optional[Sequence[int]] = None,
        out_scale: float = 1.0,
        approximate_gelu: bool = False,
    ):
        super().__init__()
        dilations = dilations or [1] * len(kernels)
        n = len(kernels)
        self.convs = nn.ModuleList([
            TimeConv(
                channels[i], channels[i + 1], kernels[i], rng,
                dilation=dilations[i],
                scale=out_scale if i == n - 1 else 1.0,
            )
            for i in range(n)
        ])
        self.approximate_gelu = approximate_gelu

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        for conv in self.convs:
            x = conv(gelu(x, self.approximate_gelu))
        return x


class ResidualBlock(nn.Module):
    """Bottom-up residual block: four convolutions (kernels 1/3/3/1) and a skip."""

    def __init__(self, channels: int, bottleneck: int, rng: Rng, n_blocks: int = 1, approximate_gelu: bool = False):
        super().__init__()
        self.branch = ConvStack(
            [channels, bottleneck, bottleneck, bottleneck, channels],
            [1, 3, 3, 1],
            rng,
            out_scale=1.0 / math.sqrt(max(n_blocks, 1)),
            approximate_gelu=approximate_gelu,
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return x + self.branch(x)


class TopDownResBlock(nn.Module):
    """Top-down residual block: three convolutions plus one dilated convolution and a skip."""

    def __init__(self, channels: int, bottleneck: int, rng: Rng, n_blocks: int = 1, approximate_gelu: bool = False):
        super().__init__()
        self.branch = ConvStack(
            [channels, bottleneck, bottleneck, bottleneck, channels],
            [1, 3, 3, 1],
            rng,
            dilations=[1, 1, 2, 1],
            out_scale=1.0 / math.sqrt(max(n_blocks, 1)),
            approximate_gelu=approximate_gelu,
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return x + self.branch(x)


def parameter_count(modules: List[nn.Module]) -> int:
    return sum(p.numel() for m in modules for p in m.parameters())
