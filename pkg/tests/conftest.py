"""
Shared fixtures: a tiny float64 configuration, a small synthetic corpus and a model.
"""
import numpy as np
import pytest
import soundfile as sf
import torch

from src.data.synthetic import make_synthetic_corpus
from src.model.vara import build_model
from src.numerics import Rng
from src.utils.config import TrainConfig, build_config

TINY = {
    "mel": {"n_mels": 6, "sample_rate": 8000, "n_fft": 256, "hop": 64},
    "model": {
        "vocab_size": 8,
        "text_dim": 8,
        "text_conv_channels": [8, 4, 4, 8],
        "text_kernel": 3,
        "pre_conv_kernel": 3,
        "channels": 8,
        "bottleneck": 4,
        "n_stacks": 2,
        "blocks_per_stack": [1, 1],
        "reduction_per_stack": [1, 2],
        "prior_kernel": 3,
        "latent_dim": 2,
        "attn_dim": 8,
        "n_heads": 2,
        "g_list": [0.1, 0.3],
        "refine_kernel": 3,
        "predictor_hidden": 8,
        "predictor_dropout": 0.1,
    },
    "optim": {"max_lr": 1.0e-3, "warmup_steps": 2},
    "train": {
        "batch_size": 2,
        "total_steps": 4,
        "seed": 0,
        "precision": "float64",
        "log_interval": 1,
        "eval_interval": 2,
        "checkpoint_interval": 2,
    },
    "ablation": {"seeds": [0]},
}


def tiny_config_dict() -> dict:
    """Deep copy of the tiny configuration document."""
    return {section: dict(values) for section, values in TINY.items()}


@pytest.fixture
def tiny_config() -> TrainConfig:
    return build_config(tiny_config_dict())


@pytest.fixture
def tiny_model(tiny_config):
    return build_model(tiny_config.model, tiny_config.mel.n_mels, seed=0, precision="float64")


@pytest.fixture
def tiny_corpus(tiny_config):
    return make_synthetic_corpus(Rng(0), 8, tiny_config.model.vocab_size, tiny_config.mel)


@pytest.fixture
def short_mel(tiny_config):
    """A positive 8×M mel."""
    gen = torch.Generator().manual_seed(3)
    return torch.rand(8, tiny_config.mel.n_mels, generator=gen, dtype=torch.float64) + 0.5


# (utt_id, metadata columns, seconds, sample rate); seconds None leaves the wav out
LJSPEECH_ROWS = [
    ("LJ001", "Hello world", 0.30, 8000),
    ("LJ002", "Ab", 0.20, 16000),
    ("LJ003", "The cat sat|The cat sat down", 0.45, 8000),
    ("LJ004", "Missing audio", None, 8000),
    ("LJ005", "Quiet day", 0.25, 8000),
]


@pytest.fixture
def ljspeech_dir(tmp_path):
    """A five-line LJSpeech-style directory with one wav left out."""
    root = tmp_path / "ljs"
    (root / "wavs").mkdir(parents=True)
    lines = []
    for i, (utt_id, columns, seconds, rate) in enumerate(LJSPEECH_ROWS):
        lines.append(f"{utt_id}|{columns}")
        if seconds is None:
            continue
        t = np.arange(int(seconds * rate)) / rate
        sf.write(root / "wavs" / f"{utt_id}.wav", 0.3 * np.sin(2 * np.pi * (300 + 100 * i) * t), rate, subtype="PCM_16")
    (root / "metadata.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return root
