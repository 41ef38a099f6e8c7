"""
Synthetic corpora with known ground-truth alignments.

Each token id owns a smooth spectral prototype (a low-order cosine mixture over
the mel axis). An utterance is a random token sequence; every token is held
for 2–8 frames and the mel is the concatenation of the prototypes plus small
Gaussian noise. Durations scatter around an utterance-level tempo, so the
frames-per-token ratio is visible in the content.
"""
import math
import string
from typing import List, Optional

import numpy as np

from ..errors import ConfigurationError, InvalidArgumentError
from ..numerics import Rng
from ..utils.config import MelConfig
from ..utils.logging import setup_logger
from .schemas import Corpus, MelSpectrogram, Utterance, Vocab
from .speed import fit_speed_stats

logger = setup_logger(__name__)

MIN_TOKENS, MAX_TOKENS = 8, 32
MIN_DUR, MAX_DUR = 2, 8
NOISE_STD = 0.01
# Noise is truncated so the prototype reconstruction bound is strict.
NOISE_CLIP = 3.0

_SYMBOL_POOL = string.ascii_lowercase + string.ascii_uppercase + string.digits + " .,;:!?'-"


def synthetic_vocab(vocab_size: int) -> Vocab:
    symbols = ["<unk>"]
    for i in range(vocab_size - 1):
        symbols.append(_SYMBOL_POOL[i] if i < len(_SYMBOL_POOL) else chr(0x100 + i))
    return Vocab(symbols=symbols)


def token_prototype(token_id: int, n_mels: int) -> np.ndarray:
    """
    Smooth positive spectral prototype for a token.

    Values stay within [0.2, 1.8], well above the mel floor.
    """
    m = np.arange(n_mels, dtype=np.float64) / n_mels
    golden = 0.6180339887498949
    f1 = 1 + token_id % 4
    f2 = 1 + (token_id // 4) % 3
    ph1 = 2 * math.pi * ((token_id * golden) % 1.0)
    ph2 = 2 * math.pi * ((token_id * golden * golden) % 1.0)
    return 1.0 + 0.45 * np.cos(2 * math.pi * f1 * m + ph1) + 0.35 * np.cos(math.pi * f2 * m + ph2)


def speaker_gain(speaker_id: Optional[int]) -> float:
    return 1.0 if not speaker_id else 1.0 + 0.15 * speaker_id


def assign_splits(n: int, rng: Rng) -> List[str]:
    """Deterministic train/valid/test tags (about 80/10/10, train first)."""
    n_held = n // 10 if n >= 10 else (1 if n >= 4 else 0)
    order = rng.permutation(n).tolist()
    tags = ["train"] * n
    for i in order[:n_held]:
        tags[i] = "valid"
    for i in order[n_held:2 * n_held]:
        tags[i] = "test"
    return tags


def make_synthetic_corpus(
    rng: Rng,
    n_utts: int,
    vocab_size: int,
    cfg: MelConfig,
    n_speakers: int = 1,
) -> Corpus:
    """
    Build a synthetic corpus.

    Args:
        rng: Seeded generator (the only source of randomness)
        n_utts: Number of utterances
        vocab_size: Vocabulary size including UNK; >= 4
        cfg: Mel configuration (n_mels, sample_rate, hop)
        n_speakers: Speakers; > 1 scales prototypes per speaker

    Returns:
        Corpus with true alignments and speed stats fitted on the train split
    """
    if vocab_size < 4:
        raise InvalidArgumentError(f"vocab_size must be >= 4, got {vocab_size}")
    if n_utts < 1:
        raise InvalidArgumentError(f"n_utts must be >= 1, got {n_utts}")

    vocab = synthetic_vocab(vocab_size)
    prototypes = np.stack([token_prototype(k, cfg.n_mels) for k in range(vocab_size)])

    utterances: List[Utterance] = []
    for i in range(n_utts):
        n_tokens = int(rng.integers(MIN_TOKENS, MAX_TOKENS + 1))
        tokens = rng.integers(1, vocab_size, (n_tokens,)).tolist()
        tempo = MIN_DUR + (MAX_DUR - MIN_DUR) * float(rng.uniform(()))
        jitter = rng.normal((n_tokens,)).numpy() * 0.75
        durations = np.clip(np.rint(tempo + jitter), MIN_DUR, MAX_DUR).astype(int)
        speaker = int(rng.integers(0, n_speakers)) if n_speakers > 1 else None

        frame_tokens = np.repeat(np.arange(n_tokens), durations)
        n_frames = int(frame_tokens.size)
        alignment = np.zeros((n_frames, n_tokens), dtype=np.float32)
        alignment[np.arange(n_frames), frame_tokens] = 1.0

        clean = prototypes[np.asarray(tokens)[frame_tokens]] * speaker_gain(speaker)
        noise = np.clip(rng.normal((n_frames, cfg.n_mels)).numpy(), -NOISE_CLIP, NOISE_CLIP) * NOISE_STD
        frames = np.maximum(clean + noise, cfg.floor)

        utterances.append(Utterance(
            utt_id=f"syn_{i:05d}",
            tokens=[int(t) for t in tokens],
            mel=MelSpectrogram(frames=frames, sample_rate=cfg.sample_rate, hop=cfg.hop),
            speaker_id=speaker,
            true_alignment=alignment,
        ))

    for utt, tag in zip(utterances, assign_splits(n_utts, rng)):
        utt.split = tag

    corpus = Corpus(
        utterances=utterances,
        vocab=vocab,
        sample_rate=cfg.sample_rate,
        hop=cfg.hop,
        n_speakers=n_speakers,
        name="synthetic",
    )
    try:
        corpus.speed_stats = fit_speed_stats(corpus.split("train"))
    except ConfigurationError as e:
        logger.warning(f"Speed stats not fitted: {e}")

    logger.info(f"Built synthetic corpus: {n_utts} utterances, vocab {vocab_size}")
    return corpus
