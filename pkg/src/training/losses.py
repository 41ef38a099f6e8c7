"""
Objective terms: reconstruction, KL, detailed KL gain, speaking speed, and their weighted sum.
"""
from dataclasses import dataclass
from typing import Dict, List, Literal

import torch

from ..errors import InternalConsistencyError, InvalidArgumentError
from ..utils.config import LossConfig

GainForm = Literal["shortfall", "printed"]


@dataclass
class LossBreakdown:
    """
    One evaluation of the objective.

    kl_per_layer holds per-frame KLs (raw layer sums divided by the frame count,
    averaged over the batch), one entry per latent layer with z0 first.
    """
    speaking_speed: torch.Tensor
    recon: torch.Tensor
    kl_total: torch.Tensor
    kl_per_layer: torch.Tensor
    detailed_kl_gain: torch.Tensor
    total: torch.Tensor
    alpha: float
    beta: float
    lam: float
    c: float

    def as_row(self) -> Dict[str, float]:
        """Flat float columns for telemetry."""
        row = {
            "speed": float(self.speaking_speed),
            "recon": float(self.recon),
            "kl_total": float(self.kl_total),
            "gain": float(self.detailed_kl_gain),
            "total": float(self.total),
        }
        for i, kl in enumerate(self.kl_per_layer.detach().tolist()):
            row[f"kl_{i}"] = kl
        return row

    def kl_list(self) -> List[float]:
        return [float(v) for v in self.kl_per_layer.detach()]


def recon_loss(x: torch.Tensor, x_hat: torch.Tensor, floor: float = 1e-5) -> torch.Tensor:
    """
    Spectral-convergence plus mean absolute log-magnitude difference for one utterance.

    ‖x − x̂‖_F / ‖x‖_F + mean|log x − log x̂|

    Args:
        x: T×M target magnitudes
        x_hat: T×M predicted magnitudes
        floor: Clamp applied before the logarithm

    Returns:
        Scalar tensor
    """
    if x.shape != x_hat.shape:
        raise InvalidArgumentError(f"recon shapes differ: {tuple(x.shape)} vs {tuple(x_hat.shape)}")
    x = x.to(x_hat.dtype)
    spectral = torch.linalg.norm(x - x_hat) / torch.linalg.norm(x)
    log_term = (torch.log(x.clamp_min(floor)) - torch.log(x_hat.clamp_min(floor))).abs().mean()
    return spectral + log_term


def kl_total(kl_per_layer: torch.Tensor, batch_size: int = 1) -> torch.Tensor:
    """
    Sum of raw per-layer KL sums divided by the batch size.

    Raises:
        InternalConsistencyError: a layer KL is negative
    """
    if batch_size < 1:
        raise InvalidArgumentError(f"batch_size must be >= 1, got {batch_size}")
    if bool((kl_per_layer.detach() < 0).any()):
        raise InternalConsistencyError(f"negative layer KL in {kl_per_layer.detach().tolist()}")
    return kl_per_layer.sum() / batch_size


def detailed_kl_gain(kl_per_frame: torch.Tensor, c: float, form: GainForm = "shortfall") -> torch.Tensor:
    """
    Penalty on layers whose per-frame KL falls below a shared reference.

    KL_ref = c / (N+1) · Σ KL_i, held constant for differentiation.
    "shortfall": Σ max(0, KL_ref − KL_i); nonzero when a layer is below the reference.
    "printed":   Σ |max(KL_i, KL_ref) − KL_ref|; nonzero when a layer is above it.

    Args:
        kl_per_frame: N+1 per-frame layer KLs
        c: Gain factor, > 0
        form: Which reading of the penalty to use

    Returns:
        Scalar tensor >= 0
    """
    if c <= 0:
        raise InvalidArgumentError(f"gain factor c must be > 0, got {c}")
    ref = (c / kl_per_frame.shape[0]) * kl_per_frame.detach().sum()
    if form == "shortfall":
        return torch.relu(ref - kl_per_frame).sum()
    if form == "printed":
        return (torch.maximum(kl_per_frame, ref) - ref).abs().sum()
    raise InvalidArgumentError(f"unknown gain form {form!r}")


def total_loss(
    speed: torch.Tensor,
    recon: torch.Tensor,
    kl_per_layer: torch.Tensor,
    kl_per_frame: torch.Tensor,
    cfg: LossConfig,
    batch_size: int = 1,
) -> LossBreakdown:
    """
    α·speed + recon + β·kl_total + λ·gain.

    λ = 0 and α = 0 reduce this to the plain β-VAE objective.

    Args:
        speed: Speaking-speed MSE
        recon: Batch-averaged reconstruction loss
        kl_per_layer: Raw per-layer KL sums accumulated over the batch
        kl_per_frame: Per-frame per-layer KLs averaged over the batch
        cfg: Loss weights
        batch_size: Utterances in the batch
    """
    kl = kl_total(kl_per_layer, batch_size)
    gain = detailed_kl_gain(kl_per_frame, cfg.c, cfg.gain_form)
    total = cfg.alpha * speed + recon + cfg.beta * kl + cfg.lam * gain
    return LossBreakdown(
        speaking_speed=speed,
        recon=recon,
        kl_total=kl,
        kl_per_layer=kl_per_frame,
        detailed_kl_gain=gain,
        total=total,
        alpha=cfg.alpha,
        beta=cfg.beta,
        lam=cfg.lam,
        c=cfg.c,
    )
