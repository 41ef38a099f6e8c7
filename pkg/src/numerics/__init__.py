"""Numerical substrate: tensor ops, Gaussians, explicit Rng, gradient oracle."""
from .gaussian import GaussianParams, gaussian_kl, reparameterize
from .gradcheck import grad_check
from .ops import (
    average_pool_time,
    conv1d,
    dropout,
    gelu,
    layer_norm,
    linear,
    nearest_upsample_time,
    relu,
    softmax_rows,
)
from .rng import Rng

__all__ = [
    "GaussianParams",
    "Rng",
    "average_pool_time",
    "conv1d",
    "dropout",
    "gaussian_kl",
    "gelu",
    "grad_check",
    "layer_norm",
    "linear",
    "nearest_upsample_time",
    "relu",
    "reparameterize",
    "softmax_rows",
]
