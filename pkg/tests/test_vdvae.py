"""
Tests for the hierarchical VAE and the assembled model.
"""
import math

import pytest
import torch

from src.data.schemas import SpeedStats
from src.errors import InvalidArgumentError, InvalidInputError
from src.model import build_model
from src.model.attention import initial_alignment
from src.model.vdvae import TopDownState, bottom_up, stack_lengths, top_down_group
from src.numerics import Rng, grad_check
from src.utils.config import build_config

from .conftest import tiny_config_dict

STATS = SpeedStats(min_ratio=2.0, max_ratio=6.0)
TOKENS = [1, 2, 3, 4, 5]


def _zero_(params) -> None:
    with torch.no_grad():
        for p in params:
            p.zero_()


def test_stack_lengths():
    """Test ceil-division lengths per stack."""
    assert stack_lengths(10, [1, 2]) == [10, 5]
    assert stack_lengths(11, [1, 2, 2]) == [11, 6, 3]
    assert stack_lengths(16, [2, 2, 2, 2]) == [8, 4, 2, 1]


def test_activation_lengths_for_random_plans():
    """Test 50 random (T, reduction plan) pairs: every stack has ceil(T / cumulative reduction) frames."""
    draws = Rng(11)
    for plan in range(10):
        n_stacks = int(draws.integers(1, 5))
        reductions = draws.integers(1, 4, (n_stacks,)).tolist()
        doc = tiny_config_dict()
        doc["model"].update(n_stacks=n_stacks, blocks_per_stack=[1] * n_stacks, reduction_per_stack=reductions)
        cfg = build_config(doc)
        model = build_model(cfg.model, cfg.mel.n_mels, seed=plan)
        max_red = cfg.model.max_reduction
        for _ in range(5):
            t = int(draws.integers(max_red, 6 * max_red + 4))
            expected = [math.ceil(t / math.prod(reductions[:i + 1])) for i in range(n_stacks)]
            assert stack_lengths(t, reductions) == expected
            mel = torch.full((t, cfg.mel.n_mels), 0.7, dtype=torch.float64)
            activations, _ = bottom_up(mel, model.bottom_up)
            assert [a.shape[0] for a in activations] == expected


def test_bottom_up_shapes(tiny_model, short_mel, tiny_config):
    """Test activation lengths follow the reductions and x0 is a channel vector."""
    activations, x0 = bottom_up(short_mel, tiny_model.bottom_up)
    assert [a.shape[0] for a in activations] == [8, 4]
    assert all(a.shape[1] == tiny_config.model.channels for a in activations)
    assert x0.shape == (tiny_config.model.channels,)


def test_bottom_up_rejects_short_mel(tiny_model, tiny_config):
    """Test a mel shorter than the total reduction raises with the minimum."""
    with pytest.raises(InvalidInputError) as exc:
        bottom_up(torch.ones(1, tiny_config.mel.n_mels, dtype=torch.float64), tiny_model.bottom_up)
    assert "2 required" in str(exc.value)


def test_bottom_up_zero_weights(tiny_model, short_mel):
    """Test a zero-weight encoder gives zero activations and x0."""
    _zero_(tiny_model.bottom_up.parameters())
    activations, x0 = bottom_up(short_mel, tiny_model.bottom_up)
    assert all(torch.equal(a, torch.zeros_like(a)) for a in activations)
    assert torch.equal(x0, torch.zeros_like(x0))


def test_decoder_zero_weights_gives_ones(tiny_model, short_mel):
    """Test a zero decode head outputs exp(0) everywhere."""
    _zero_(tiny_model.decoder.parameters())
    out = tiny_model.forward_train(short_mel, TOKENS, None, Rng(0))
    assert torch.equal(out.mel_hat, torch.ones_like(short_mel))


def test_forward_train_outputs(tiny_model, short_mel, tiny_config):
    """Test shapes, positivity, layer count and alignment count."""
    out = tiny_model.forward_train(short_mel, TOKENS, None, Rng(0))
    assert out.mel_hat.shape == short_mel.shape
    assert (out.mel_hat > 0).all()
    assert len(out.hierarchy.layers) == tiny_model.n_layers == 3
    assert out.hierarchy.z0.shape == (tiny_config.model.latent_dim,)
    assert len(out.alignments) == len(tiny_model.groups) + 1
    for a in out.alignments:
        assert a.weights.shape[1] == len(TOKENS)
        assert torch.allclose(a.weights.sum(dim=1), torch.ones(a.weights.shape[0], dtype=torch.float64), atol=1e-6)
    assert (out.hierarchy.kl_per_layer() >= 0).all()
    assert 0.0 < float(out.d_hat) < 1.0
    # group order is coarse to fine
    assert [layer.z.shape[0] for layer in out.hierarchy.layers[1:]] == [4, 8]


def test_forward_train_deterministic(tiny_model, short_mel):
    """Test the same seed gives identical outputs."""
    a = tiny_model.forward_train(short_mel, TOKENS, None, Rng(3))
    b = tiny_model.forward_train(short_mel, TOKENS, None, Rng(3))
    assert torch.equal(a.mel_hat, b.mel_hat)
    assert torch.equal(a.hierarchy.kl_per_layer(), b.hierarchy.kl_per_layer())


def test_top_down_group_mode_checks(tiny_model, tiny_config):
    """Test unknown modes and mode/activation mismatches raise."""
    group = tiny_model.groups[0]
    c, lat = tiny_config.model.channels, tiny_config.model.latent_dim
    state = TopDownState(activation=torch.zeros(2, c, dtype=torch.float64), query=torch.zeros(2, lat, dtype=torch.float64))
    kv = tiny_model.encode_text(TOKENS).kv
    a_prev = initial_alignment(2, len(TOKENS), 0.1)
    act = torch.zeros(4, c, dtype=torch.float64)
    with pytest.raises(InvalidArgumentError):
        top_down_group(state, act, kv, a_prev, "sample", Rng(0), group, 4, 1)
    with pytest.raises(InvalidArgumentError):
        top_down_group(state, None, kv, a_prev, "train", Rng(0), group, 4, 1)
    with pytest.raises(InvalidArgumentError):
        top_down_group(state, act, kv, a_prev, "infer", Rng(0), group, 4, 1)

    new_state, layer, a_next = top_down_group(state, None, kv, a_prev, "infer", Rng(0), group, 4, 1)
    assert new_state.activation.shape == (4, c)
    assert layer.q is None and float(layer.kl) == 0.0
    assert a_next.shape == (4, len(TOKENS))


def test_infer_override_frames(tiny_model):
    """Test override F yields F frames and ceil(F/max_red) coarse frames."""
    for frames in (1, 7, 8, 13):
        out = tiny_model.synthesize(TOKENS, STATS, Rng(0), override_frames=frames)
        assert out.mel_hat.shape == (frames, tiny_model.n_mels)
        assert out.n_frames == frames
        assert out.t_max_red == -(-frames // tiny_model.max_reduction)
    with pytest.raises(InvalidArgumentError):
        tiny_model.synthesize(TOKENS, STATS, Rng(0), override_frames=0)


def test_infer_uses_speed_prediction(tiny_model):
    """Test the predicted frame budget follows the speed stats."""
    out = tiny_model.synthesize(TOKENS, STATS, Rng(0))
    ratio = STATS.min_ratio + float(out.d_hat) * (STATS.max_ratio - STATS.min_ratio)
    assert out.n_frames == int(ratio * len(TOKENS) + 0.5)
    assert out.mel_hat.shape[0] == out.n_frames
    assert out.warnings == []


def test_infer_clamp_warning(tiny_model):
    """Test a prediction below max reduction is clamped and reported."""
    out = tiny_model.synthesize([1], SpeedStats(min_ratio=0.1, max_ratio=0.5), Rng(0))
    assert out.n_frames == tiny_model.max_reduction
    assert len(out.warnings) == 1


def test_infer_deterministic(tiny_model):
    """Test the same seed gives identical mel_hat."""
    a = tiny_model.synthesize(TOKENS, STATS, Rng(9), override_frames=10)
    b = tiny_model.synthesize(TOKENS, STATS, Rng(9), override_frames=10)
    assert torch.equal(a.mel_hat, b.mel_hat)


def test_infer_ignores_bottom_up(tiny_model):
    """Test zeroing posterior-only parameters leaves inference unchanged."""
    before = tiny_model.synthesize(TOKENS, STATS, Rng(1), override_frames=10)
    _zero_(tiny_model.bottom_up_parameters())
    after = tiny_model.synthesize(TOKENS, STATS, Rng(1), override_frames=10)
    assert torch.equal(before.mel_hat, after.mel_hat)


def test_tied_posterior_train_equals_infer(short_mel):
    """Test q = p at every layer makes train and infer sample identically."""
    doc = tiny_config_dict()
    doc["model"]["tied_posterior_layers"] = [0, 1, 2]
    cfg = build_config(doc)
    model = build_model(cfg.model, cfg.mel.n_mels, seed=0)
    with torch.no_grad():
        train = model.forward_train(short_mel, TOKENS, None, Rng(4), training=False)
        infer = model.forward_infer(model.encode_text(TOKENS), STATS, Rng(4), override_frames=short_mel.shape[0])
    assert torch.equal(train.mel_hat, infer.mel_hat)
    assert float(train.hierarchy.total_kl()) == 0.0


def test_model_gradients(tiny_model, short_mel):
    """Test reconstruction + KL gradients against finite differences."""
    def f():
        out = tiny_model.forward_train(short_mel, TOKENS, None, Rng(0), training=False)
        return out.mel_hat.log().sum() + out.hierarchy.total_kl()

    params = [
        tiny_model.text_encoder.embedding,
        tiny_model.bottom_up.pre_conv.weight,
        tiny_model.top.posterior_head.weight,
        tiny_model.groups[0].attention.w_q.weight,
        tiny_model.groups[1].refiner.kernel,
        tiny_model.groups[1].posterior.convs[-1].weight,
        tiny_model.decoder.proj.weight,
    ]
    assert grad_check(f, params, atol=1e-8, max_coords=4, rng=Rng(5)) < 1e-4


def test_build_model_rejects_unknown_precision(tiny_config):
    """Test precision must be float32 or float64."""
    with pytest.raises(InvalidArgumentError):
        build_model(tiny_config.model, 6, seed=0, precision="float16")


def test_build_model_float32(tiny_config, short_mel):
    """Test a float32 model runs end to end."""
    model = build_model(tiny_config.model, tiny_config.mel.n_mels, seed=0, precision="float32")
    out = model.forward_train(short_mel, TOKENS, None, Rng(0))
    assert out.mel_hat.dtype == torch.float32
