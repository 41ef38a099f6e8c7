"""
Real-audio ingestion for LJSpeech-style directories.

    <root>/metadata.csv   lines "id|text" or "id|text|normalized text"
    <root>/wavs/<id>.wav

Audio is read at its native rate, linearly resampled to the configured rate,
converted to mel, and tokenized with a character vocabulary built from the
training texts.
"""
from pathlib import Path
from typing import List, Optional, Tuple

import librosa

from ..errors import FormatError, InvalidInputError
from ..numerics import Rng
from ..utils.config import MelConfig
from ..utils.logging import setup_logger
from .mel import compute_mel, resample_linear
from .schemas import Corpus, Utterance, Vocab
from .speed import fit_speed_stats
from .synthetic import assign_splits
from .tokenizer import tokenize

logger = setup_logger(__name__)


def read_metadata(root: Path) -> List[Tuple[str, str]]:
    """Parse metadata.csv into (utt_id, text) pairs, preferring the normalized column."""
    path = root / "metadata.csv"
    if not path.exists():
        raise FormatError("metadata.csv not found", path)
    rows = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split("|")
        if len(parts) < 2:
            raise FormatError(f"line {lineno}: expected 'id|text'", path)
        text = parts[2] if len(parts) > 2 and parts[2].strip() else parts[1]
        rows.append((parts[0].strip(), text.strip().lower()))
    return rows


def prepare_corpus(
    root: Path,
    cfg: MelConfig,
    rng: Rng,
    limit: Optional[int] = None,
) -> Corpus:
    """
    Build a corpus from an LJSpeech-style directory.

    Args:
        root: Directory containing metadata.csv and wavs/
        cfg: Mel configuration
        rng: Generator for the split assignment
        limit: Optional cap on the number of utterances

    Returns:
        Corpus with vocab and speed stats fitted on the train split
    """
    rows = read_metadata(root)
    if limit is not None:
        rows = rows[:limit]
    splits = assign_splits(len(rows), rng)

    vocab = Vocab.from_texts([text for (_, text), tag in zip(rows, splits) if tag == "train"])
    utterances = []
    for (utt_id, text), tag in zip(rows, splits):
        wav_path = root / "wavs" / f"{utt_id}.wav"
        if not wav_path.exists():
            logger.warning(f"Skipping {utt_id}: {wav_path} not found")
            continue
        y, sr = librosa.load(wav_path, sr=None, mono=True)
        y = resample_linear(y, int(sr), cfg.sample_rate)
        try:
            mel = compute_mel(y, cfg.sample_rate, cfg)
        except InvalidInputError as e:
            logger.warning(f"Skipping {utt_id}: {e}")
            continue
        tokens = tokenize(text, vocab)
        if not tokens:
            logger.warning(f"Skipping {utt_id}: empty transcript")
            continue
        utterances.append(Utterance(utt_id=utt_id, tokens=tokens, mel=mel, split=tag, text=text))

    corpus = Corpus(
        utterances=utterances,
        vocab=vocab,
        sample_rate=cfg.sample_rate,
        hop=cfg.hop,
        name=root.name,
    )
    corpus.speed_stats = fit_speed_stats(corpus.split("train"))
    logger.info(f"Prepared {len(utterances)} utterances from {root} (vocab {vocab.size})")
    return corpus
