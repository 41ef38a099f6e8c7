"""
Very deep VAE core: bottom-up stacks, top latent group, top-down groups, decoder head.

The bottom-up path pools the log-mel to coarser time scales. The top-down path
starts from z0 broadcast over the coarsest scale and, group by group, unpools
its state, attends to the text with residual attention, samples a latent
(posterior in training, prior at inference) and runs residual blocks.
"""
import math
from dataclasses import dataclass, field
from typing import List, Literal, Optional, Tuple

import torch
from torch import nn

from ..errors import InvalidArgumentError, InvalidInputError
from ..numerics import (
    GaussianParams,
    Rng,
    average_pool_time,
    gaussian_kl,
    gelu,
    nearest_upsample_time,
    reparameterize,
)
from ..utils.config import ModelConfig
from .attention import AlignmentMatrix, AlignmentRefiner, ResidualMultiHeadAttention
from .blocks import ConvStack, Dense, ResidualBlock, TimeConv, TopDownResBlock

Mode = Literal["train", "infer"]


@dataclass
class LatentLayer:
    """One latent layer: sample, prior, posterior (train only) and raw KL sum."""
    z: torch.Tensor
    p: Optional[GaussianParams]
    q: Optional[GaussianParams]
    kl: torch.Tensor


@dataclass
class LatentHierarchy:
    """z0 at index 0, then one layer per top-down group (coarse to fine)."""
    layers: List[LatentLayer]
    n_frames: int

    @property
    def z0(self) -> torch.Tensor:
        return self.layers[0].z

    def kl_per_layer(self) -> torch.Tensor:
        """Raw KL sums (over time and channels), one per layer."""
        return torch.stack([layer.kl for layer in self.layers])

    def kl_per_frame(self) -> torch.Tensor:
        """Raw KL sums divided by the number of mel frames."""
        return self.kl_per_layer() / self.n_frames

    def total_kl(self) -> torch.Tensor:
        return self.kl_per_layer().sum()


@dataclass
class TopDownState:
    """Running activation, the previous latent (next query), and collected outputs."""
    activation: torch.Tensor
    query: torch.Tensor
    alignments: List[AlignmentMatrix] = field(default_factory=list)
    kls: List[torch.Tensor] = field(default_factory=list)


def stack_lengths(n_frames: int, reductions: List[int]) -> List[int]:
    """Activation length after every bottom-up stack: ceil(T / cumulative reduction)."""
    lengths, cum = [], 1
    for r in reductions:
        cum *= r
        lengths.append(math.ceil(n_frames / cum))
    return lengths


class BottomUp(nn.Module):
    """Mel pre-convolution followed by residual stacks with average pooling."""

    def __init__(self, cfg: ModelConfig, n_mels: int, rng: Rng):
        super().__init__()
        self.reductions = list(cfg.reduction_per_stack)
        self.pre_conv = TimeConv(n_mels, cfg.channels, cfg.pre_conv_kernel, rng)
        total_blocks = sum(cfg.blocks_per_stack)
        self.stacks = nn.ModuleList([
            nn.ModuleList([
                ResidualBlock(cfg.channels, cfg.bottleneck, rng, total_blocks, cfg.gelu_approximate)
                for _ in range(n_blocks)
            ])
            for n_blocks in cfg.blocks_per_stack
        ])

    @property
    def max_reduction(self) -> int:
        return math.prod(self.reductions)


def bottom_up(mel: torch.Tensor, params: BottomUp, floor: float = 1e-5) -> Tuple[List[torch.Tensor], torch.Tensor]:
    """
    Run the bottom-up path on a T×M magnitude spectrogram.

    Returns:
        (activations per stack after pooling, x0 = global temporal mean of the last)
    """
    if mel.shape[0] < params.max_reduction:
        raise InvalidInputError(
            f"mel has {mel.shape[0]} frames; at least {params.max_reduction} required by the reductions"
        )
    h = params.pre_conv(torch.log(mel.clamp_min(floor)))
    activations = []
    for blocks, factor in zip(params.stacks, params.reductions):
        for block in blocks:
            h = block(h)
        h = average_pool_time(h, factor)
        activations.append(h)
    return activations, h.mean(dim=0)


class TopGroup(nn.Module):
    """Heads for q(z0 | x0, t0) and p(z0 | t0)."""

    def __init__(self, cfg: ModelConfig, rng: Rng):
        super().__init__()
        self.text_path = Dense(cfg.attn_dim, cfg.channels, rng)
        self.prior_head = Dense(cfg.channels, 2 * cfg.latent_dim, rng, scale=0.1)
        self.posterior_head = Dense(2 * cfg.channels, 2 * cfg.latent_dim, rng, scale=0.1)


def top_group_distributions(
    x0: Optional[torch.Tensor],
    t0: torch.Tensor,
    params: TopGroup,
) -> Tuple[Optional[GaussianParams], GaussianParams]:
    """
    (q(z0|x0,t0), p(z0|t0)); q is None when x0 is None (inference).
    """
    t_bias = params.text_path(t0)
    p = GaussianParams.from_stats(params.prior_head(gelu(t_bias)))
    q = None
    if x0 is not None:
        q = GaussianParams.from_stats(params.posterior_head(gelu(torch.cat([x0, t_bias]))))
    return q, p


class TopDownGroup(nn.Module):
    """One attention-bearing stochastic block plus deterministic residual blocks."""

    def __init__(self, cfg: ModelConfig, n_blocks: int, rng: Rng, total_blocks: int):
        super().__init__()
        c, b, lat = cfg.channels, cfg.bottleneck, cfg.latent_dim
        k = cfg.prior_kernel
        self.latent_dim = lat
        self.refiner = AlignmentRefiner(cfg.refine_kernel, rng)
        self.attention = ResidualMultiHeadAttention(lat, cfg.attn_dim, cfg.attn_dim, cfg.n_heads, rng, cfg.a_prev_gain)
        self.ctx_proj = Dense(cfg.attn_dim, c, rng)
        self.prior = ConvStack([c, b, b, b, 2 * lat + c], [k] * 4, rng, out_scale=0.1,
                               approximate_gelu=cfg.gelu_approximate)
        self.posterior = ConvStack([2 * c, b, b, b, 2 * lat], [k] * 4, rng, out_scale=0.1,
                                   approximate_gelu=cfg.gelu_approximate)
        self.z_proj = TimeConv(lat, c, 1, rng, scale=0.1)
        self.res = TopDownResBlock(c, b, rng, total_blocks, cfg.gelu_approximate)
        self.extra = nn.ModuleList([
            TopDownResBlock(c, b, rng, total_blocks, cfg.gelu_approximate) for _ in range(n_blocks - 1)
        ])


def top_down_group(
    state: TopDownState,
    bottomup_act: Optional[torch.Tensor],
    text_kv: torch.Tensor,
    a_prev: AlignmentMatrix,
    mode: Mode,
    rng: Rng,
    params: TopDownGroup,
    target_len: int,
    layer_index: int,
    tied: bool = False,
) -> Tuple[TopDownState, LatentLayer, AlignmentMatrix]:
    """
    Run one top-down group at `target_len` frames.

    Args:
        state: Previous group's state (activation and latent at a coarser or equal scale)
        bottomup_act: Bottom-up activation at this scale (train mode only)
        text_kv: L×D text keys/values
        a_prev: Alignment handed down by the previous layer
        mode: "train" samples from q, "infer" from p
        rng: Sampling generator
        params: Group parameters
        target_len: Frames at this scale
        layer_index: Hierarchy index of this latent layer (1-based)
        tied: Replace the posterior by the prior for this layer

    Returns:
        (new state, latent layer (kl is the raw sum, 0 in infer mode), A_next)
    """
    if mode not in ("train", "infer"):
        raise InvalidArgumentError(f"unknown mode {mode!r}")
    if mode == "train" and bottomup_act is None:
        raise InvalidArgumentError("train mode requires the bottom-up activation")
    if mode == "infer" and bottomup_act is not None:
        raise InvalidArgumentError("infer mode must not receive bottom-up activations")

    factor = math.ceil(target_len / state.activation.shape[0])
    act = nearest_upsample_time(state.activation, factor, target_len)
    query = nearest_upsample_time(state.query, factor, target_len)

    a_bias = params.refiner(a_prev.weights, target_len)
    context, a_next = params.attention(query, text_kv, text_kv, a_bias, layer_index)
    bias = act + params.ctx_proj(context)

    prior_out = params.prior(bias)
    lat = params.latent_dim
    p = GaussianParams.from_stats(prior_out[:, :2 * lat])
    prior_features = prior_out[:, 2 * lat:]

    q = None
    if mode == "train":
        q = p if tied else GaussianParams.from_stats(params.posterior(torch.cat([bottomup_act, bias], dim=1)))
        z = reparameterize(q, rng)
        kl = gaussian_kl(q, p).sum()
    else:
        z = reparameterize(p, rng)
        kl = bias.new_zeros(())

    h = params.res(bias + params.z_proj(z) + prior_features)
    for block in params.extra:
        h = block(h)

    new_state = TopDownState(
        activation=h,
        query=z,
        alignments=state.alignments + [a_next],
        kls=state.kls + [kl],
    )
    return new_state, LatentLayer(z=z, p=p, q=q, kl=kl), a_next


class DecodeHead(nn.Module):
    """Per-frame projection to log-magnitudes."""

    def __init__(self, channels: int, n_mels: int, rng: Rng):
        super().__init__()
        self.proj = Dense(channels, n_mels, rng, scale=0.1)


def decode_head(state_bottom: torch.Tensor, params: DecodeHead) -> torch.Tensor:
    """mel_hat = exp(linear(state)); strictly positive, T×M."""
    return torch.exp(params.proj(state_bottom))
