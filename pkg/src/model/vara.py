"""
The full acoustic model: text encoder, hierarchical VAE with residual
attention, decoder head and speaking-speed predictor.
"""
import math
from dataclasses import dataclass, field
from typing import Iterator, List, Optional, Sequence, Tuple

import torch
from torch import nn

from ..data.schemas import SpeedStats
from ..data.speed import denormalize_speed
from ..errors import InvalidArgumentError
from ..numerics import Rng, gaussian_kl, nearest_upsample_time, reparameterize
from ..utils.config import ModelConfig
from ..utils.logging import setup_logger
from .attention import AlignmentMatrix, initial_context
from .blocks import Dense
from .speed_predictor import SpeedPredictor, frames_from_speed, predict_speed
from .text_encoder import TextEncoder, TextEncoding, encode_text
from .vdvae import (
    BottomUp,
    DecodeHead,
    LatentHierarchy,
    LatentLayer,
    TopDownGroup,
    TopDownState,
    TopGroup,
    bottom_up,
    decode_head,
    stack_lengths,
    top_down_group,
    top_group_distributions,
)

logger = setup_logger(__name__)

DTYPES = {"float32": torch.float32, "float64": torch.float64}


@dataclass
class TrainOutput:
    """Posterior-path forward pass."""
    mel_hat: torch.Tensor
    hierarchy: LatentHierarchy
    alignments: List[AlignmentMatrix]
    d_hat: torch.Tensor
    text: TextEncoding


@dataclass
class InferOutput:
    """Prior-path forward pass."""
    mel_hat: torch.Tensor
    alignments: List[AlignmentMatrix]
    d_hat: torch.Tensor
    n_frames: int
    t_max_red: int
    warnings: List[str] = field(default_factory=list)


class VaraModel(nn.Module):
    """Container for every parameter group of the acoustic model."""

    def __init__(self, cfg: ModelConfig, n_mels: int, rng: Rng, dtype: torch.dtype = torch.float64, floor: float = 1e-5):
        super().__init__()
        self.cfg = cfg
        self.n_mels = n_mels
        self.floor = floor
        self.reductions = list(cfg.reduction_per_stack)
        self.max_reduction = cfg.max_reduction
        self.tied = set(cfg.tied_posterior_layers)

        self.text_encoder = TextEncoder(cfg, rng)
        self.bottom_up = BottomUp(cfg, n_mels, rng)
        self.top = TopGroup(cfg, rng)
        self.init_projection = Dense(len(cfg.g_list) * cfg.attn_dim, cfg.attn_dim, rng)
        self.seed_z = Dense(cfg.latent_dim, cfg.channels, rng)
        self.seed_ctx = Dense(cfg.attn_dim, cfg.channels, rng)

        total_blocks = sum(cfg.blocks_per_stack)
        # Groups run coarse to fine and mirror the bottom-up table reversed
        self.groups = nn.ModuleList([
            TopDownGroup(cfg, n_blocks, rng, total_blocks) for n_blocks in reversed(cfg.blocks_per_stack)
        ])
        self.decoder = DecodeHead(cfg.channels, n_mels, rng)

        predictor_in = cfg.attn_dim if cfg.separate_speed_predictor else cfg.latent_dim
        self.speed_predictor = SpeedPredictor(predictor_in, cfg.predictor_hidden, cfg.predictor_dropout, rng)

        self.to(dtype)
        logger.debug(f"Built model with {sum(p.numel() for p in self.parameters())} parameters")

    @property
    def dtype(self) -> torch.dtype:
        return self.decoder.proj.weight.dtype

    @property
    def n_layers(self) -> int:
        """Latent layers including z0."""
        return len(self.groups) + 1

    def bottom_up_parameters(self) -> Iterator[nn.Parameter]:
        """Parameters used only on the posterior path."""
        yield from self.bottom_up.parameters()
        yield from self.top.posterior_head.parameters()
        for group in self.groups:
            yield from group.posterior.parameters()

    def encode_text(self, tokens: Sequence[int], speaker_id: Optional[int] = None) -> TextEncoding:
        return encode_text(self.text_encoder, tokens, speaker_id)

    def _predictor_input(self, z0: torch.Tensor, text: TextEncoding) -> torch.Tensor:
        if self.cfg.separate_speed_predictor:
            return text.pooled.detach()
        return z0

    def _top_down(
        self,
        text: TextEncoding,
        z0: torch.Tensor,
        lengths: List[int],
        n_frames: int,
        mode: str,
        rng: Rng,
        activations: Optional[List[torch.Tensor]] = None,
    ) -> Tuple[torch.Tensor, TopDownState, List[LatentLayer]]:
        t_max_red = lengths[-1]
        context, a_init = initial_context(text.kv, t_max_red, self.cfg.g_list, self.init_projection)
        z0_frames = z0.unsqueeze(0).expand(t_max_red, -1)
        state = TopDownState(
            activation=self.seed_z(z0_frames) + self.seed_ctx(context),
            query=z0_frames,
            alignments=[a_init],
        )

        layers: List[LatentLayer] = []
        a_prev = a_init
        n_stacks = len(self.reductions)
        for g, group in enumerate(self.groups):
            s = n_stacks - 1 - g
            layer_index = g + 1
            state, layer, a_prev = top_down_group(
                state,
                activations[s] if mode == "train" else None,
                text.kv,
                a_prev,
                mode,
                rng,
                group,
                target_len=lengths[s],
                layer_index=layer_index,
                tied=layer_index in self.tied,
            )
            layers.append(layer)

        factor = math.ceil(n_frames / state.activation.shape[0])
        bottom = nearest_upsample_time(state.activation, factor, n_frames)
        return decode_head(bottom, self.decoder), state, layers

    def forward_train(
        self,
        mel: torch.Tensor,
        tokens: Sequence[int],
        speaker_id: Optional[int],
        rng: Rng,
        training: bool = True,
    ) -> TrainOutput:
        """
        Posterior path: bottom-up → z0 → initial context → top-down groups → decoder.

        Args:
            mel: T×M magnitudes
            tokens: Token ids
            speaker_id: Optional speaker
            rng: Sampling / dropout generator
            training: Enables predictor dropout

        Returns:
            TrainOutput with mel_hat (T×M), the latent hierarchy, N+1 alignments and d̂
        """
        mel = mel.to(self.dtype)
        n_frames = mel.shape[0]
        text = self.encode_text(tokens, speaker_id)
        activations, x0 = bottom_up(mel, self.bottom_up, self.floor)

        q0, p0 = top_group_distributions(x0, text.pooled, self.top)
        if 0 in self.tied:
            q0 = p0
        z0 = reparameterize(q0, rng)
        kl0 = gaussian_kl(q0, p0).sum()

        lengths = stack_lengths(n_frames, self.reductions)
        mel_hat, state, layers = self._top_down(text, z0, lengths, n_frames, "train", rng, activations)
        hierarchy = LatentHierarchy(layers=[LatentLayer(z=z0, p=p0, q=q0, kl=kl0)] + layers, n_frames=n_frames)

        d_hat = predict_speed(self._predictor_input(z0, text), self.speed_predictor, rng, training)
        return TrainOutput(mel_hat=mel_hat, hierarchy=hierarchy, alignments=state.alignments, d_hat=d_hat, text=text)

    def forward_infer(
        self,
        text: TextEncoding,
        stats: SpeedStats,
        rng: Rng,
        override_frames: Optional[int] = None,
    ) -> InferOutput:
        """
        Prior path. The bottom-up encoder and posterior heads are never touched.

        Args:
            text: Text encoding
            stats: Training-set speed stats used to denormalize d̂
            rng: Sampling generator
            override_frames: Bypass the predictor with an explicit frame count

        Returns:
            InferOutput with mel_hat truncated to the frame budget
        """
        warnings: List[str] = []
        _, p0 = top_group_distributions(None, text.pooled, self.top)
        z0 = reparameterize(p0, rng)
        d_hat = predict_speed(self._predictor_input(z0, text), self.speed_predictor, rng, training=False)

        if override_frames is not None:
            if override_frames < 1:
                raise InvalidArgumentError(f"override_frames must be >= 1, got {override_frames}")
            n_frames = int(override_frames)
            t_max_red = math.ceil(n_frames / self.max_reduction)
        else:
            raw = int(math.floor(denormalize_speed(float(d_hat), stats) * text.length + 0.5))
            n_frames, t_max_red = frames_from_speed(float(d_hat), text.length, stats, self.max_reduction)
            if raw < self.max_reduction:
                warnings.append(f"predicted {raw} frames clamped to max reduction {self.max_reduction}")

        padded = t_max_red * self.max_reduction
        lengths = stack_lengths(padded, self.reductions)
        mel_hat, state, _ = self._top_down(text, z0, lengths, padded, "infer", rng)
        return InferOutput(
            mel_hat=mel_hat[:n_frames],
            alignments=state.alignments,
            d_hat=d_hat,
            n_frames=n_frames,
            t_max_red=t_max_red,
            warnings=warnings,
        )

    def synthesize(
        self,
        tokens: Sequence[int],
        stats: SpeedStats,
        rng: Rng,
        speaker_id: Optional[int] = None,
        override_frames: Optional[int] = None,
    ) -> InferOutput:
        """Encode text and run the prior path."""
        with torch.no_grad():
            return self.forward_infer(self.encode_text(tokens, speaker_id), stats, rng, override_frames)


def build_model(cfg: ModelConfig, n_mels: int, seed: int, precision: str = "float64", floor: float = 1e-5) -> VaraModel:
    """Construct a model with parameters drawn from Rng(seed)."""
    if precision not in DTYPES:
        raise InvalidArgumentError(f"unknown precision {precision!r}")
    return VaraModel(cfg, n_mels, Rng(seed), DTYPES[precision], floor)
