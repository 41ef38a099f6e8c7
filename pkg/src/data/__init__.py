"""Data pipeline: mel extraction, tokenization, speed targets, corpora."""
from .mel import compute_mel, mel_band_centers, mel_filter_bank, resample_linear
from .schemas import Corpus, MelSpectrogram, SpeedStats, Utterance, Vocab
from .speed import denormalize_speed, fit_speed_stats, speaking_speed_target
from .storage import load_corpus, load_corpus_async, save_corpus
from .synthetic import make_synthetic_corpus, token_prototype
from .tokenizer import tokenize

__all__ = [
    "Corpus",
    "MelSpectrogram",
    "SpeedStats",
    "Utterance",
    "Vocab",
    "compute_mel",
    "denormalize_speed",
    "fit_speed_stats",
    "load_corpus",
    "load_corpus_async",
    "make_synthetic_corpus",
    "mel_band_centers",
    "mel_filter_bank",
    "resample_linear",
    "save_corpus",
    "speaking_speed_target",
    "token_prototype",
    "tokenize",
]
