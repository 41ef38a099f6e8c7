"""
Rule-based initial alignment and layer-wise residual multi-head attention.

Alignments are refined top-down: every attention layer adds the previous
layer's averaged post-softmax weights (upsampled to the new time scale and
smoothed by a learned temporal kernel) to its scaled dot-product scores.
"""
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import torch
import torch.nn.functional as F
from torch import nn

from ..errors import InvalidArgumentError
from ..numerics import Rng, nearest_upsample_time, softmax_rows
from .blocks import Dense


@dataclass
class AlignmentMatrix:
    """Row-stochastic T_n×L attention weights of one hierarchy layer."""
    weights: torch.Tensor
    layer_index: int
    temporal_scale: int

    @property
    def shape(self) -> Tuple[int, int]:
        return tuple(self.weights.shape)

    def row_entropy(self) -> float:
        """Mean Shannon entropy of the rows, in nats."""
        w = self.weights.detach().clamp_min(1e-300)
        return float(-(w * torch.log(w)).sum(dim=1).mean())


def diagonal_log_scores(t_red: int, length: int, g: float, dtype: torch.dtype = torch.float64) -> torch.Tensor:
    """Unnormalized log kernel −(t/T − l/L)² / (2g²) with zero-based t, l."""
    if g <= 0:
        raise InvalidArgumentError(f"bandwidth g must be > 0, got {g}")
    if t_red < 1 or length < 1:
        raise InvalidArgumentError(f"need T_red >= 1 and L >= 1, got {t_red}, {length}")
    t = torch.arange(t_red, dtype=torch.float64).unsqueeze(1) / t_red
    l = torch.arange(length, dtype=torch.float64).unsqueeze(0) / length
    return (-((t - l) ** 2) / (2.0 * g * g)).to(dtype)


def initial_alignment(t_red: int, length: int, g: float, dtype: torch.dtype = torch.float64) -> AlignmentMatrix:
    """
    Nearly diagonal alignment S_tl = exp(−(t/T − l/L)² / 2g²), row-normalized.

    Normalization runs in log space so narrow bandwidths never produce empty rows.
    """
    weights = softmax_rows(diagonal_log_scores(t_red, length, g, dtype))
    return AlignmentMatrix(weights=weights, layer_index=0, temporal_scale=t_red)


def initial_context(
    v: torch.Tensor,
    t_red: int,
    g_list: Sequence[float],
    projection: Optional[nn.Module] = None,
) -> Tuple[torch.Tensor, AlignmentMatrix]:
    """
    Context from one diagonal alignment per bandwidth.

    Args:
        v: L×D values
        t_red: Frames at the coarsest scale
        g_list: Bandwidths
        projection: Map from len(g_list)·D to D; when None the concatenation is returned

    Returns:
        (context, A_init) where A_init is the mean of the per-g alignments
    """
    if not g_list:
        raise InvalidArgumentError("g_list must be non-empty")
    mats = [initial_alignment(t_red, v.shape[0], g, v.dtype).weights for g in g_list]
    contexts = torch.cat([a @ v for a in mats], dim=1)
    if projection is not None:
        contexts = projection(contexts)
    a_init = torch.stack(mats).mean(dim=0)
    return contexts, AlignmentMatrix(weights=a_init, layer_index=0, temporal_scale=t_red)


def residual_attention_head(
    q: torch.Tensor,
    k: torch.Tensor,
    v: torch.Tensor,
    a_prev: Optional[torch.Tensor],
    gain: float = 1.0,
) -> Tuple[torch.Tensor, torch.Tensor]:
    """
    A = softmax(QKᵀ/√d_k + gain·A_prev); out = A·V.

    A_prev=None gives plain scaled dot-product attention.
    """
    scores = (q @ k.t()) / math.sqrt(q.shape[1])
    if a_prev is not None:
        if a_prev.shape != scores.shape:
            raise InvalidArgumentError(
                f"A_prev shape {tuple(a_prev.shape)} does not match scores {tuple(scores.shape)}"
            )
        scores = scores + gain * a_prev
    a = softmax_rows(scores)
    return a @ v, a


class ResidualMultiHeadAttention(nn.Module):
    """Per-head projections W_i^Q, W_i^K, W_i^V and output projection W^O."""

    def __init__(self, query_dim: int, kv_dim: int, attn_dim: int, n_heads: int, rng: Rng, gain: float = 1.0):
        super().__init__()
        if attn_dim % n_heads:
            raise InvalidArgumentError(f"attn_dim {attn_dim} not divisible by {n_heads} heads")
        self.n_heads = n_heads
        self.d_k = attn_dim // n_heads
        self.gain = gain
        self.w_q = Dense(query_dim, attn_dim, rng, bias=False)
        self.w_k = Dense(kv_dim, attn_dim, rng, bias=False)
        self.w_v = Dense(kv_dim, attn_dim, rng, bias=False)
        self.w_o = Dense(attn_dim, kv_dim, rng, bias=False)

    def forward(
        self,
        q: torch.Tensor,
        k: torch.Tensor,
        v: torch.Tensor,
        a_prev: Optional[torch.Tensor],
        layer_index: int = 0,
    ) -> Tuple[torch.Tensor, AlignmentMatrix]:
        return residual_multi_head(q, k, v, a_prev, self, layer_index)


def residual_multi_head(
    q: torch.Tensor,
    k: torch.Tensor,
    v: torch.Tensor,
    a_prev: Optional[torch.Tensor],
    params: ResidualMultiHeadAttention,
    layer_index: int = 0,
) -> Tuple[torch.Tensor, AlignmentMatrix]:
    """
    Multi-head residual attention.

    Returns:
        (context T×D, A_next) where A_next is the head-average of the weights
    """
    qp, kp, vp = params.w_q(q), params.w_k(k), params.w_v(v)
    outs: List[torch.Tensor] = []
    weights: List[torch.Tensor] = []
    for h in range(params.n_heads):
        sl = slice(h * params.d_k, (h + 1) * params.d_k)
        out, a = residual_attention_head(qp[:, sl], kp[:, sl], vp[:, sl], a_prev, params.gain)
        outs.append(out)
        weights.append(a)
    context = params.w_o(torch.cat(outs, dim=1))
    # fixed head order for the average
    a_next = torch.stack(weights).mean(dim=0)
    return context, AlignmentMatrix(weights=a_next, layer_index=layer_index, temporal_scale=q.shape[0])


def refine_prev_alignment(a_prev: torch.Tensor, t_new: int, kernel: torch.Tensor) -> torch.Tensor:
    """
    Upsample A_prev to t_new rows (nearest, truncated) and smooth it over time.

    The same temporal kernel is applied to every text column (columns act as
    channels). The result is not renormalized.

    Args:
        a_prev: T_prev×L weights
        t_new: Target rows, >= T_prev
        kernel: Odd-length temporal kernel

    Returns:
        t_new×L tensor
    """
    t_prev = a_prev.shape[0]
    if t_new < t_prev:
        raise InvalidArgumentError(f"cannot refine {t_prev} rows down to {t_new}")
    k = kernel.shape[0]
    if k % 2 == 0:
        raise InvalidArgumentError(f"refinement kernel must have odd length, got {k}")
    factor = math.ceil(t_new / t_prev)
    up = nearest_upsample_time(a_prev, factor, target=t_new)
    smoothed = F.conv1d(up.t().unsqueeze(1), kernel.view(1, 1, k), padding=k // 2)
    return smoothed[:, 0, :].t()


class AlignmentRefiner(nn.Module):
    """Learned temporal kernel, initialized to identity plus small noise."""

    def __init__(self, kernel_size: int, rng: Rng, noise: float = 0.01):
        super().__init__()
        init = rng.normal((kernel_size,)) * noise
        init[kernel_size // 2] += 1.0
        self.kernel = nn.Parameter(init)

    def forward(self, a_prev: torch.Tensor, t_new: int) -> torch.Tensor:
        return refine_prev_alignment(a_prev, t_new, self.kernel)
