"""
Tests for the text encoder.
"""
import math

import pytest
import torch

from src.errors import InvalidArgumentError, InvalidInputError
from src.model.text_encoder import TextEncoder, encode_text, film, positional_encoding
from src.numerics import Rng, grad_check


@pytest.fixture
def encoder(tiny_config):
    return TextEncoder(tiny_config.model, Rng(0))


@pytest.fixture
def multi_encoder(tiny_config):
    cfg = tiny_config.model.model_copy(update={"n_speakers": 3})
    return TextEncoder(cfg, Rng(0))


def test_positional_encoding_values():
    """Test the first row, PE[1, 0] and the value range."""
    pe = positional_encoding(16, 8)
    assert torch.equal(pe[0, 0::2], torch.zeros(4, dtype=torch.float64))
    assert torch.equal(pe[0, 1::2], torch.ones(4, dtype=torch.float64))
    assert abs(float(pe[1, 0]) - math.sin(1.0)) < 1e-15
    assert pe.abs().max() <= 1.0


def test_positional_encoding_rejects_odd_dim():
    """Test odd D raises."""
    with pytest.raises(InvalidArgumentError):
        positional_encoding(4, 7)


def test_film_identity_and_zero_scale():
    """Test γ=1, ξ=0 is the identity and γ=0 broadcasts ξ."""
    u = torch.randn(5, 3, dtype=torch.float64)
    spk = torch.zeros(2, dtype=torch.float64)
    out = film(u, spk, lambda s: torch.ones(3, dtype=torch.float64), lambda s: torch.zeros(3, dtype=torch.float64))
    assert torch.equal(out, u)

    xi = torch.tensor([1.0, 2.0, 3.0], dtype=torch.float64)
    out = film(u, spk, lambda s: torch.zeros(3, dtype=torch.float64), lambda s: xi)
    assert torch.equal(out, xi.expand(5, 3))


def test_encode_text_shapes(encoder, tiny_config):
    """Test kv has one row per token and pooled is its mean."""
    for length in (1, 3, 17):
        enc = encode_text(encoder, [1 + i % 7 for i in range(length)])
        assert enc.kv.shape == (length, tiny_config.model.attn_dim)
        assert enc.length == length
        assert torch.allclose(enc.pooled, enc.kv.mean(dim=0), atol=1e-12)


def test_encode_text_single_speaker_ignores_speaker(encoder):
    """Test the speaker argument is a no-op in single-speaker mode."""
    a = encode_text(encoder, [1, 2, 3], speaker_id=None)
    b = encode_text(encoder, [1, 2, 3], speaker_id=5)
    assert torch.equal(a.kv, b.kv)


def test_encode_text_distinct_speakers(multi_encoder):
    """Test two speakers give distinct encodings for identical tokens."""
    a = multi_encoder([1, 2, 3], speaker_id=0)
    b = multi_encoder([1, 2, 3], speaker_id=1)
    assert not torch.allclose(a.kv, b.kv)
    with pytest.raises(InvalidInputError):
        multi_encoder([1, 2, 3], speaker_id=3)


def test_encode_text_position_sensitive(encoder):
    """Test permuting a non-constant sequence changes kv."""
    a = encode_text(encoder, [1, 2, 3, 4])
    b = encode_text(encoder, [4, 3, 2, 1])
    assert not torch.allclose(a.kv, b.kv)


def test_encode_text_rejects_bad_tokens(encoder):
    """Test empty sequences and out-of-vocabulary ids."""
    with pytest.raises(InvalidInputError):
        encode_text(encoder, [])
    with pytest.raises(InvalidInputError):
        encode_text(encoder, [1, 8])


def test_encode_text_gradients(multi_encoder):
    """Test gradients reach embeddings, FiLM and conv weights."""
    readout = torch.randn(4, 8, dtype=torch.float64, generator=torch.Generator().manual_seed(0))

    def f():
        return (multi_encoder([1, 2, 3, 1], speaker_id=2).kv * readout).sum()

    params = [multi_encoder.embedding, multi_encoder.film_scale.weight, multi_encoder.convs[0].weight]
    assert grad_check(f, params, atol=1e-9, max_coords=12, rng=Rng(1)) < 1e-5
