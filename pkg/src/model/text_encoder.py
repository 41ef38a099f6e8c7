"""
Text encoder: token ids (+ optional speaker) → L×D keys/values.

embedding → FiLM (multi-speaker only) → four convolutions with GELU between
→ + sinusoidal positional encoding. The pooled vector t0 is the temporal mean
of the final encoding.
"""
from dataclasses import dataclass
from typing import List, Optional, Sequence

import torch
from torch import nn

from ..errors import InvalidArgumentError, InvalidInputError
from ..numerics import Rng, gelu
from ..utils.config import ModelConfig
from .blocks import Dense, TimeConv


@dataclass
class TextEncoding:
    """Attention keys/values and their temporal mean."""
    kv: torch.Tensor
    pooled: torch.Tensor

    @property
    def length(self) -> int:
        return int(self.kv.shape[0])


def film(
    u_phn: torch.Tensor,
    spk_emb: torch.Tensor,
    scale_layer: nn.Module,
    shift_layer: nn.Module,
) -> torch.Tensor:
    """γ_spk ⊙ U_phn + ξ_spk with γ, ξ computed from the speaker embedding."""
    gamma = scale_layer(spk_emb)
    xi = shift_layer(spk_emb)
    return gamma.unsqueeze(0) * u_phn + xi.unsqueeze(0)


def positional_encoding(length: int, dim: int, dtype: torch.dtype = torch.float64) -> torch.Tensor:
    """Sinusoidal table: PE[pos, 2i] = sin(pos / 10000^(2i/D)), PE[pos, 2i+1] = cos(·)."""
    if dim % 2:
        raise InvalidArgumentError(f"positional encoding needs an even dimension, got {dim}")
    pos = torch.arange(length, dtype=torch.float64).unsqueeze(1)
    i2 = torch.arange(0, dim, 2, dtype=torch.float64)
    angle = pos / torch.pow(10000.0, i2 / dim)
    pe = torch.zeros(length, dim, dtype=torch.float64)
    pe[:, 0::2] = torch.sin(angle)
    pe[:, 1::2] = torch.cos(angle)
    return pe.to(dtype)


class TextEncoder(nn.Module):
    """Phoneme (character) embedding, speaker FiLM, conv stack, positional encoding."""

    def __init__(self, cfg: ModelConfig, rng: Rng):
        super().__init__()
        self.vocab_size = cfg.vocab_size
        self.multi_speaker = cfg.n_speakers > 1
        self.pe_scale = cfg.pe_scale
        self.approximate_gelu = cfg.gelu_approximate

        self.embedding = nn.Parameter(rng.normal((cfg.vocab_size, cfg.text_dim)) * 0.3)
        if self.multi_speaker:
            self.speakers = nn.Parameter(rng.normal((cfg.n_speakers, cfg.speaker_dim)) * 0.3)
            self.film_scale = Dense(cfg.speaker_dim, cfg.text_dim, rng, scale=0.1)
            self.film_shift = Dense(cfg.speaker_dim, cfg.text_dim, rng, scale=0.1)
            # γ starts near 1
            with torch.no_grad():
                self.film_scale.bias.fill_(1.0)

        channels = [cfg.text_dim] + list(cfg.text_conv_channels)
        self.convs = nn.ModuleList([
            TimeConv(channels[i], channels[i + 1], cfg.text_kernel, rng)
            for i in range(len(cfg.text_conv_channels))
        ])

    def forward(self, tokens: Sequence[int], speaker_id: Optional[int] = None) -> TextEncoding:
        return encode_text(self, tokens, speaker_id)


def encode_text(encoder: TextEncoder, tokens: Sequence[int], speaker_id: Optional[int] = None) -> TextEncoding:
    """
    Encode a token sequence.

    Args:
        encoder: Text encoder parameters
        tokens: Non-empty token ids < vocab size
        speaker_id: Optional speaker; ignored in single-speaker mode

    Returns:
        TextEncoding with kv (L×D) and pooled (D)
    """
    ids: List[int] = [int(t) for t in tokens]
    if not ids:
        raise InvalidInputError("token sequence is empty")
    bad = [t for t in ids if t < 0 or t >= encoder.vocab_size]
    if bad:
        raise InvalidInputError(f"token ids {bad[:5]} outside vocabulary of size {encoder.vocab_size}")

    x = encoder.embedding[torch.tensor(ids, dtype=torch.long)]
    if encoder.multi_speaker and speaker_id is not None:
        if not 0 <= speaker_id < encoder.speakers.shape[0]:
            raise InvalidInputError(f"speaker id {speaker_id} outside [0, {encoder.speakers.shape[0]})")
        x = film(x, encoder.speakers[speaker_id], encoder.film_scale, encoder.film_shift)

    n = len(encoder.convs)
    for i, conv in enumerate(encoder.convs):
        x = conv(x)
        if i < n - 1:
            x = gelu(x, encoder.approximate_gelu)

    kv = x + encoder.pe_scale * positional_encoding(len(ids), x.shape[1], dtype=x.dtype)
    return TextEncoding(kv=kv, pooled=kv.mean(dim=0))
