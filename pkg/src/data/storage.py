"""
On-disk corpus format.

Directory layout:
    manifest.json            UTF-8 JSON: vocab, speed stats, per-utterance metadata
    features/<utt_id>.vara   one binary feature record per utterance

Feature record (little-endian):
    magic "VARA" | u16 version | u32 T | u32 M | u32 L | u32 sample_rate | u32 hop
    | f32[T·M] mel | f32[T·L] alignment (absent when L == 0)
"""
import asyncio
import json
import struct
from pathlib import Path
from typing import List, Optional, Tuple, Union

import aiofiles
import numpy as np
from pydantic import BaseModel, Field, ValidationError

from ..errors import FormatError, VersionError
from ..utils.logging import setup_logger
from .schemas import Corpus, MelSpectrogram, SpeedStats, Utterance, Vocab

logger = setup_logger(__name__)

MAGIC = b"VARA"
FORMAT_VERSION = 1
MANIFEST_NAME = "manifest.json"
FEATURE_DIR = "features"
_HEADER = struct.Struct("<4sH5I")

PathLike = Union[str, Path]


class ManifestEntry(BaseModel):
    """Per-utterance metadata stored in the manifest."""
    utt_id: str
    file: str
    tokens: List[int]
    speaker_id: Optional[int] = None
    split: str = "train"
    text: Optional[str] = None


class CorpusManifest(BaseModel):
    """Sidecar manifest of a corpus directory."""
    format_version: int = FORMAT_VERSION
    name: str = "corpus"
    vocab: List[str]
    speed_stats: Optional[SpeedStats] = None
    n_speakers: int = 1
    sample_rate: int
    hop: int
    n_mels: int
    utterances: List[ManifestEntry] = Field(default_factory=list)


def encode_feature_record(mel: MelSpectrogram, alignment: Optional[np.ndarray] = None) -> bytes:
    """Serialize one mel (and optional alignment) into a feature record."""
    frames = np.ascontiguousarray(mel.frames, dtype="<f4")
    t, m = frames.shape
    if alignment is not None:
        align = np.ascontiguousarray(alignment, dtype="<f4")
        if align.shape[0] != t:
            raise FormatError(f"alignment has {align.shape[0]} rows, mel has {t} frames")
        n_cols = align.shape[1]
    else:
        align, n_cols = None, 0
    header = _HEADER.pack(MAGIC, FORMAT_VERSION, t, m, n_cols, mel.sample_rate, mel.hop)
    payload = frames.tobytes()
    if align is not None:
        payload += align.tobytes()
    return header + payload


def decode_feature_record(data: bytes, path: Optional[PathLike] = None) -> Tuple[MelSpectrogram, Optional[np.ndarray]]:
    """
    Parse a feature record.

    Raises:
        FormatError: bad magic or truncated payload
        VersionError: unsupported format version
    """
    if len(data) < _HEADER.size:
        raise FormatError(f"truncated header ({len(data)} bytes)", path)
    magic, version, t, m, n_cols, sample_rate, hop = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}", path)
    if version != FORMAT_VERSION:
        raise VersionError(f"unsupported feature record version {version} (expected {FORMAT_VERSION})", path)
    if t < 1 or m < 1:
        raise FormatError(f"invalid dims T={t} M={m}", path)
    expected = _HEADER.size + 4 * (t * m + t * n_cols)
    if len(data) != expected:
        raise FormatError(f"payload is {len(data)} bytes, expected {expected}", path)

    offset = _HEADER.size
    frames = np.frombuffer(data, dtype="<f4", count=t * m, offset=offset).reshape(t, m).astype(np.float32)
    offset += 4 * t * m
    alignment = None
    if n_cols:
        alignment = np.frombuffer(data, dtype="<f4", count=t * n_cols, offset=offset)
        alignment = alignment.reshape(t, n_cols).astype(np.float32)
    return MelSpectrogram(frames=frames, sample_rate=sample_rate, hop=hop), alignment


def write_feature_record(path: PathLike, mel: MelSpectrogram, alignment: Optional[np.ndarray] = None) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_feature_record(mel, alignment))


def read_feature_record(path: PathLike) -> Tuple[MelSpectrogram, Optional[np.ndarray]]:
    path = Path(path)
    return decode_feature_record(path.read_bytes(), path)


def save_corpus(corpus: Corpus, directory: PathLike) -> Path:
    """
    Write a corpus directory (manifest + one feature record per utterance).

    Args:
        corpus: Corpus to save
        directory: Target directory (created if missing)

    Returns:
        Path to the manifest
    """
    root = Path(directory)
    (root / FEATURE_DIR).mkdir(parents=True, exist_ok=True)

    entries = []
    for utt in corpus.utterances:
        rel = f"{FEATURE_DIR}/{utt.utt_id}.vara"
        write_feature_record(root / rel, utt.mel, utt.true_alignment)
        entries.append(ManifestEntry(
            utt_id=utt.utt_id,
            file=rel,
            tokens=list(utt.tokens),
            speaker_id=utt.speaker_id,
            split=utt.split,
            text=utt.text,
        ))

    manifest = CorpusManifest(
        name=corpus.name,
        vocab=corpus.vocab.symbols,
        speed_stats=corpus.speed_stats,
        n_speakers=corpus.n_speakers,
        sample_rate=corpus.sample_rate,
        hop=corpus.hop,
        n_mels=corpus.n_mels,
        utterances=entries,
    )
    manifest_path = root / MANIFEST_NAME
    manifest_path.write_text(manifest.model_dump_json(indent=2), encoding="utf-8")
    logger.info(f"Saved {len(entries)} utterances to {root}")
    return manifest_path


def read_manifest(directory: PathLike) -> CorpusManifest:
    path = Path(directory) / MANIFEST_NAME
    if not path.exists():
        raise FormatError("manifest not found", path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise FormatError(f"manifest is not valid JSON: {e}", path)
    version = raw.get("format_version") if isinstance(raw, dict) else None
    if version != FORMAT_VERSION:
        raise VersionError(f"unsupported manifest version {version} (expected {FORMAT_VERSION})", path)
    try:
        return CorpusManifest.model_validate(raw)
    except ValidationError as e:
        raise FormatError(f"malformed manifest: {e}", path)


async def _load_record(path: Path, semaphore: asyncio.Semaphore) -> Tuple[MelSpectrogram, Optional[np.ndarray]]:
    async with semaphore:
        try:
            async with aiofiles.open(path, "rb") as f:
                data = await f.read()
        except FileNotFoundError:
            raise FormatError("feature record missing", path)
    return decode_feature_record(data, path)


async def load_corpus_async(directory: PathLike, max_concurrency: int = 16) -> Corpus:
    """
    Load a corpus directory, reading feature records concurrently.

    The returned utterance order follows the manifest regardless of completion order.
    """
    root = Path(directory)
    manifest = read_manifest(root)
    semaphore = asyncio.Semaphore(max_concurrency)
    records = await asyncio.gather(*[
        _load_record(root / entry.file, semaphore) for entry in manifest.utterances
    ])

    utterances = []
    for entry, (mel, alignment) in zip(manifest.utterances, records):
        utterances.append(Utterance(
            utt_id=entry.utt_id,
            tokens=list(entry.tokens),
            mel=mel,
            speaker_id=entry.speaker_id,
            true_alignment=alignment,
            split=entry.split,
            text=entry.text,
        ))

    logger.info(f"Loaded {len(utterances)} utterances from {root}")
    return Corpus(
        utterances=utterances,
        vocab=Vocab(symbols=manifest.vocab),
        speed_stats=manifest.speed_stats,
        sample_rate=manifest.sample_rate,
        hop=manifest.hop,
        n_speakers=manifest.n_speakers,
        name=manifest.name,
    )


def load_corpus(directory: PathLike, max_concurrency: int = 16) -> Corpus:
    """Synchronous wrapper around load_corpus_async."""
    return asyncio.run(load_corpus_async(directory, max_concurrency))
