"""
Tests for the schedule, batching and training loop.
"""
import json
import math

import pytest
import torch

from src.errors import ConfigurationError, InvalidArgumentError, NumericFailure
from src.numerics import Rng
from src.training import (
    Trainer,
    apply_scheduled_step,
    build_optimizer,
    clip_gradients,
    compute_loss,
    lr_schedule,
    make_batch,
    read_telemetry,
    total_loss,
)
from src.training import trainer as trainer_module
from src.utils.config import OptimConfig, merge_config


def _params(trainer: Trainer):
    return [p.detach().clone() for p in trainer.model.parameters()]


def _same(a, b) -> bool:
    return len(a) == len(b) and all(torch.equal(x, y) for x, y in zip(a, b))


def test_lr_schedule_examples():
    """Test warmup peak, half warmup and four times warmup."""
    assert lr_schedule(100, 100, 1e-3) == 1e-3
    assert lr_schedule(50, 100, 1e-3) == pytest.approx(5e-4, abs=1e-18)
    assert lr_schedule(400, 100, 1e-3) == pytest.approx(5e-4, abs=1e-18)
    with pytest.raises(InvalidArgumentError):
        lr_schedule(0, 100, 1e-3)


def test_make_batch_pads_with_floor(tiny_corpus, tiny_config):
    """Test padding value, lengths and speed targets."""
    utts = tiny_corpus.split("train")[:2]
    batch = make_batch(utts, tiny_corpus.speed_stats, tiny_config.mel.floor, pad_to=300)
    assert batch.mels.shape == (2, 300, tiny_config.mel.n_mels)
    assert batch.lengths == [u.mel.n_frames for u in utts]
    assert (batch.mels[0, batch.lengths[0]:] == tiny_config.mel.floor).all()
    assert ((batch.speed_targets >= 0) & (batch.speed_targets <= 1)).all()
    with pytest.raises(InvalidArgumentError):
        make_batch(utts, tiny_corpus.speed_stats, tiny_config.mel.floor, pad_to=1)


def test_padding_never_changes_the_loss(tiny_model, tiny_corpus, tiny_config):
    """Test extra padding leaves every loss term unchanged."""
    utts = tiny_corpus.split("train")[:2]
    tight = make_batch(utts, tiny_corpus.speed_stats, tiny_config.mel.floor)
    loose = make_batch(utts, tiny_corpus.speed_stats, tiny_config.mel.floor, pad_to=tight.mels.shape[1] + 37)
    a, _ = compute_loss(tiny_model, tight, tiny_config, Rng(0))
    b, _ = compute_loss(tiny_model, loose, tiny_config, Rng(0))
    assert a.as_row() == b.as_row()


def test_trainer_rejects_incompatible_corpus(tiny_config, tiny_corpus):
    """Test missing stats and mel mismatch fail before step 1."""
    with pytest.raises(ConfigurationError):
        Trainer(merge_config(tiny_config, {"mel.n_mels": 7}), tiny_corpus)
    tiny_corpus.speed_stats = None
    with pytest.raises(ConfigurationError):
        Trainer(tiny_config, tiny_corpus)


def test_batches_are_a_function_of_step(tiny_config, tiny_corpus):
    """Test every epoch covers the train split once and batching is reproducible."""
    trainer = Trainer(tiny_config, tiny_corpus)
    per_epoch = trainer.batches_per_epoch
    assert per_epoch == 3
    seen = sum((trainer.batch_indices(s) for s in range(1, per_epoch + 1)), [])
    assert sorted(seen) == list(range(len(trainer.train_set)))
    other = Trainer(tiny_config, tiny_corpus)
    assert [other.batch_indices(s) for s in (5, 1, 4)] == [trainer.batch_indices(s) for s in (5, 1, 4)]


def test_train_step_sets_scheduled_lr(tiny_config, tiny_corpus):
    """Test the optimizer lr follows the schedule and the step counter advances."""
    trainer = Trainer(tiny_config, tiny_corpus)
    breakdown, grad_norm = trainer.train_step(trainer.batch_for_step(1))
    assert trainer.step == 1
    assert trainer.optimizer.param_groups[0]["lr"] == lr_schedule(1, 2, 1e-3)
    assert grad_norm > 0
    assert torch.isfinite(breakdown.total)


def _scalar_adam(x: float, steps: int, optim: OptimConfig) -> float:
    """Plain-float Adam with bias correction on f(x) = (x − 0.5)²."""
    m = v = 0.0
    for t in range(1, steps + 1):
        g = 2.0 * (x - 0.5)
        lr = lr_schedule(t, optim.warmup_steps, optim.max_lr)
        m = optim.beta1 * m + (1.0 - optim.beta1) * g
        v = optim.beta2 * v + (1.0 - optim.beta2) * g * g
        step_size = lr / (1.0 - optim.beta1 ** t)
        denom = math.sqrt(v) / math.sqrt(1.0 - optim.beta2 ** t) + optim.eps
        x -= step_size * m / denom
    return x


def test_adam_update_matches_scalar_reference():
    """Test 100 scheduled updates on one float64 parameter against a hand-written Adam."""
    optim = OptimConfig(max_lr=1e-2, warmup_steps=10)
    x = torch.zeros(1, dtype=torch.float64, requires_grad=True)
    optimizer = build_optimizer([x], optim)
    for step in range(1, 101):
        optimizer.zero_grad(set_to_none=True)
        ((x - 0.5) ** 2).sum().backward()
        # gradient stays below the clip threshold, so clipping is the identity
        assert clip_gradients([x], optim.grad_clip, step) < optim.grad_clip
        apply_scheduled_step(optimizer, step, optim)
    assert abs(float(x) - _scalar_adam(0.0, 100, optim)) < 1e-12


def test_train_step_uses_scheduled_update(tiny_config, tiny_corpus, mocker):
    """Test train_step routes through the scheduled Adam update with the next step index."""
    spy = mocker.spy(trainer_module, "apply_scheduled_step")
    trainer = Trainer(tiny_config, tiny_corpus)
    trainer.train_step(trainer.batch_for_step(1))
    trainer.train_step(trainer.batch_for_step(2))
    assert [c.args[1] for c in spy.call_args_list] == [1, 2]


def test_training_is_deterministic(tiny_config, tiny_corpus):
    """Test identical seeds give identical parameters after two steps."""
    a, b = Trainer(tiny_config, tiny_corpus), Trainer(tiny_config, tiny_corpus)
    start = _params(a)
    for trainer in (a, b):
        trainer.fit(total_steps=2)
    assert _same(_params(a), _params(b))
    assert not _same(_params(a), start)


def test_evaluate_is_deterministic_and_isolated(tiny_config, tiny_corpus):
    """Test evaluation repeats exactly and never draws from the training generator."""
    trainer = Trainer(tiny_config, tiny_corpus)
    counter = trainer.rng.counter
    first = trainer.evaluate()
    second = trainer.evaluate()
    assert first.model_dump(exclude={"wall_time"}) == second.model_dump(exclude={"wall_time"})
    assert trainer.rng.counter == counter
    assert len(first.kl_per_layer) == trainer.model.n_layers
    assert first.cumulative_kl[-1] == pytest.approx(sum(first.kl_per_layer))
    assert first.neg_elbo == pytest.approx(first.recon + first.kl_total)


def test_evaluate_falls_back_to_train(tiny_config, tiny_corpus):
    """Test an empty split evaluates on train."""
    trainer = Trainer(tiny_config, tiny_corpus)
    record = trainer.evaluate("missing")
    assert record.speed_mse is not None


def test_fit_writes_run_directory(tiny_config, tiny_corpus, tmp_path):
    """Test telemetry, validation, checkpoints and heatmaps land in the run directory."""
    trainer = Trainer(tiny_config, tiny_corpus, tmp_path / "run")
    records = trainer.fit()

    run = tmp_path / "run"
    assert (run / "config.yaml").exists()
    logged = read_telemetry(run / "telemetry.csv")
    assert [r.step for r in logged] == [1, 2, 3, 4]
    assert [r.total for r in logged] == [r.total for r in records]
    assert logged[0].kl_per_layer == records[0].kl_per_layer
    assert [r.step for r in read_telemetry(run / "validation.csv")] == [2, 4]
    for step in (2, 4):
        assert (run / "checkpoints" / f"step_{step}.ckpt").exists()
        assert (run / "alignments" / f"step_{step}" / "layer_0.csv").exists()
    assert (run / "checkpoints" / "last.ckpt").exists()


def test_resume_matches_uninterrupted_run(tiny_config, tiny_corpus, tmp_path):
    """Test resuming from a mid-run checkpoint reproduces the final parameters."""
    full = Trainer(tiny_config, tiny_corpus, tmp_path / "full")
    full.fit(total_steps=4)

    resumed = Trainer(tiny_config, tiny_corpus, tmp_path / "resumed")
    resumed.fit(total_steps=4, resume_from=tmp_path / "full" / "checkpoints" / "step_2.ckpt")

    assert resumed.step == 4
    assert _same(_params(full), _params(resumed))
    assert full.rng.counter == resumed.rng.counter


def test_numeric_failure_dumps_batch(tiny_config, tiny_corpus, tmp_path, mocker):
    """Test a non-finite loss aborts with the batch ids on disk."""
    trainer = Trainer(tiny_config, tiny_corpus, tmp_path)
    nan = torch.tensor(float("nan"), dtype=torch.float64)
    one = torch.tensor(1.0, dtype=torch.float64)
    breakdown = total_loss(nan, one, torch.ones(3, dtype=torch.float64), torch.ones(3, dtype=torch.float64), tiny_config.loss)
    mocker.patch("src.training.trainer.compute_loss", return_value=(breakdown, []))

    batch = trainer.batch_for_step(1)
    with pytest.raises(NumericFailure) as exc:
        trainer.train_step(batch)
    assert exc.value.batch_ids == batch.ids
    report = json.loads((tmp_path / "numeric_failure.json").read_text())
    assert report["batch_ids"] == batch.ids
    assert trainer.step == 0
