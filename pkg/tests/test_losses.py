"""
Tests for the training objective.
"""
import math

import pytest
import torch

from src.errors import InternalConsistencyError, InvalidArgumentError
from src.training.losses import detailed_kl_gain, kl_total, recon_loss, total_loss
from src.utils.config import LossConfig


def _t(values):
    return torch.tensor(values, dtype=torch.float64)


def test_recon_loss_identical_is_zero():
    """Test x̂ == x gives 0."""
    x = torch.rand(5, 3, dtype=torch.float64) + 0.1
    assert float(recon_loss(x, x.clone())) == 0.0


def test_recon_loss_scaled_by_e():
    """Test x̂ = e·x gives (e − 1) + 1."""
    x = torch.rand(6, 4, dtype=torch.float64) + 0.1
    loss = recon_loss(x, math.e * x)
    assert abs(float(loss) - ((math.e - 1.0) + 1.0)) < 1e-12


def test_recon_loss_floor_and_shape():
    """Test zeros are clamped before the log and shapes must agree."""
    x = torch.ones(2, 2, dtype=torch.float64)
    assert math.isfinite(float(recon_loss(x, torch.zeros(2, 2, dtype=torch.float64))))
    with pytest.raises(InvalidArgumentError):
        recon_loss(x, torch.ones(3, 2, dtype=torch.float64))


def test_kl_total():
    """Test zeros, a plain sum and batch averaging."""
    assert float(kl_total(_t([0.0, 0.0]))) == 0.0
    assert float(kl_total(_t([1.0, 2.0, 3.0]))) == 6.0
    assert float(kl_total(_t([1.0, 2.0, 3.0]), batch_size=2)) == 3.0


def test_kl_total_rejects_negative():
    """Test a negative layer KL is an accounting error."""
    with pytest.raises(InternalConsistencyError):
        kl_total(_t([1.0, -1e-3]))


def test_gain_equal_layers_is_zero():
    """Test equal KLs with c <= 1 incur no penalty."""
    for c in (0.2, 0.5, 1.0):
        assert float(detailed_kl_gain(_t([0.7, 0.7, 0.7]), c)) == 0.0


def test_gain_shortfall_example():
    """Test KL = [0, 1], c = 0.5 gives reference 0.25 and gain 0.25."""
    kl = _t([0.0, 1.0]).requires_grad_()
    gain = detailed_kl_gain(kl, 0.5)
    assert abs(float(gain) - 0.25) < 1e-15
    gain.backward()
    # the reference is held constant
    assert kl.grad.tolist() == [-1.0, 0.0]


def test_gain_printed_form():
    """Test the printed form penalizes layers above the reference."""
    gain = detailed_kl_gain(_t([0.0, 1.0]), 0.5, form="printed")
    assert abs(float(gain) - 0.75) < 1e-15
    with pytest.raises(InvalidArgumentError):
        detailed_kl_gain(_t([0.0, 1.0]), 0.5, form="other")
    with pytest.raises(InvalidArgumentError):
        detailed_kl_gain(_t([0.0, 1.0]), 0.0)


@pytest.mark.parametrize("seed", range(5))
def test_gain_non_negative(seed):
    """Test the gain is non-negative and zero iff no layer is below the reference."""
    kl = torch.rand(4, dtype=torch.float64, generator=torch.Generator().manual_seed(seed))
    gain = float(detailed_kl_gain(kl, 0.5))
    ref = 0.5 / 4 * float(kl.sum())
    assert gain >= 0.0
    assert (gain == 0.0) == bool((kl >= ref).all())


def test_total_loss_identity():
    """Test total equals the weighted sum of its parts."""
    cfg = LossConfig(alpha=0.7, beta=1.8, lam=2.0, c=0.5)
    raw = _t([4.0, 2.0, 6.0])
    per_frame = _t([0.1, 0.0, 0.3])
    out = total_loss(_t(0.2), _t(1.5), raw, per_frame, cfg, batch_size=2)
    expected = 0.7 * 0.2 + 1.5 + 1.8 * 6.0 + 2.0 * float(detailed_kl_gain(per_frame, 0.5))
    assert abs(float(out.total) - expected) < 1e-9
    assert float(out.kl_total) == 6.0
    assert out.kl_list() == [0.1, 0.0, 0.3]


def test_total_loss_reduces_to_beta_vae():
    """Test λ = 0 and α = 0 leave recon + β·KL."""
    cfg = LossConfig(alpha=0.0, beta=1.8, lam=0.0)
    out = total_loss(_t(5.0), _t(1.0), _t([1.0, 1.0]), _t([0.0, 1.0]), cfg)
    assert abs(float(out.total) - (1.0 + 1.8 * 2.0)) < 1e-12


def test_loss_breakdown_row():
    """Test the telemetry row carries one kl_i column per layer."""
    out = total_loss(_t(0.1), _t(0.2), _t([1.0, 2.0]), _t([0.5, 1.0]), LossConfig())
    row = out.as_row()
    assert set(row) == {"speed", "recon", "kl_total", "gain", "total", "kl_0", "kl_1"}
    assert row["kl_1"] == 1.0


def test_gain_gradient_on_short_layer():
    """Test a layer below the reference gets d(total)/d(KL_i) = −λ through the gain alone."""
    cfg = LossConfig(alpha=0.0, beta=0.0, lam=1.7, c=0.5)
    per_frame = _t([0.05, 1.0, 2.0]).requires_grad_(True)
    out = total_loss(_t(0.0), _t(0.0), _t([1.0, 1.0, 1.0]), per_frame, cfg)
    out.total.backward()
    # reference = 0.5 / 3 · 3.05
    assert per_frame.grad.tolist() == [-1.7, 0.0, 0.0]


def test_gain_pushes_pinned_layer_up():
    """Test a layer held at KL = 0 sees descent pressure that raises its KL."""
    cfg = LossConfig(lam=1.0, c=0.5)
    per_frame = _t([0.0, 0.4, 0.8]).requires_grad_(True)
    out = total_loss(_t(0.1), _t(1.0), _t([0.0, 4.0, 8.0]), per_frame, cfg)
    out.total.backward()
    assert float(out.detailed_kl_gain) > 0
    assert per_frame.grad[0] < 0
    stepped = per_frame.detach() - 0.01 * per_frame.grad
    assert stepped[0] > 0
