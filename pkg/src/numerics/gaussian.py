"""
Diagonal Gaussian parameters, closed-form KL and reparameterized sampling.
"""
from dataclasses import dataclass

import torch

from ..errors import InvalidArgumentError
from .rng import Rng


@dataclass
class GaussianParams:
    """Mean and log standard deviation of an isotropic diagonal Gaussian."""
    mean: torch.Tensor
    log_std: torch.Tensor

    def __post_init__(self):
        if self.mean.shape != self.log_std.shape:
            raise InvalidArgumentError(
                f"mean {tuple(self.mean.shape)} and log_std {tuple(self.log_std.shape)} differ"
            )

    @property
    def shape(self) -> torch.Size:
        return self.mean.shape

    @classmethod
    def from_stats(cls, stats: torch.Tensor) -> "GaussianParams":
        """Split the last axis of a head output into (mean, log_std) halves."""
        dim = stats.shape[-1] // 2
        return cls(mean=stats[..., :dim], log_std=stats[..., dim:2 * dim])


def gaussian_kl(q: GaussianParams, p: GaussianParams) -> torch.Tensor:
    """
    Elementwise KL(q || p) between diagonal Gaussians.

    KL = log(σp/σq) + (σq² + (μq − μp)²) / (2σp²) − ½

    Args:
        q: Posterior parameters
        p: Prior parameters

    Returns:
        Tensor of the common shape, every entry >= 0
    """
    if q.shape != p.shape:
        raise InvalidArgumentError(f"KL shapes differ: {tuple(q.shape)} vs {tuple(p.shape)}")
    var_ratio = torch.exp(2.0 * (q.log_std - p.log_std))
    mean_term = (q.mean - p.mean) ** 2 * torch.exp(-2.0 * p.log_std)
    kl = (p.log_std - q.log_std) + 0.5 * (var_ratio + mean_term) - 0.5
    return kl.clamp_min(0.0)


def reparameterize(g: GaussianParams, rng: Rng) -> torch.Tensor:
    """
    Draw mean + exp(log_std)·ε with ε ~ N(0, 1) from rng.

    Gradients flow to mean and log_std; ε is a constant.
    """
    eps = rng.normal(g.mean.shape, dtype=g.mean.dtype)
    return g.mean + torch.exp(g.log_std) * eps
