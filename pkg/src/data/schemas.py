"""
Corpus-level data types.
"""
from dataclasses import dataclass, field
from typing import ClassVar, Dict, List, Optional

import numpy as np
from pydantic import BaseModel, Field

from ..errors import InvalidInputError

SPLITS = ("train", "valid", "test")


@dataclass
class MelSpectrogram:
    """T×M grid of positive magnitudes (float32 on the host)."""
    frames: np.ndarray
    sample_rate: int
    hop: int

    def __post_init__(self):
        self.frames = np.ascontiguousarray(self.frames, dtype=np.float32)
        if self.frames.ndim != 2 or self.frames.shape[0] < 1:
            raise InvalidInputError(f"mel must be T×M with T >= 1, got shape {self.frames.shape}")

    @property
    def n_frames(self) -> int:
        return int(self.frames.shape[0])

    @property
    def n_mels(self) -> int:
        return int(self.frames.shape[1])


@dataclass
class Utterance:
    """One training example."""
    utt_id: str
    tokens: List[int]
    mel: MelSpectrogram
    speaker_id: Optional[int] = None
    true_alignment: Optional[np.ndarray] = None
    split: str = "train"
    text: Optional[str] = None

    @property
    def n_tokens(self) -> int:
        return len(self.tokens)

    @property
    def speed_ratio(self) -> float:
        """Frames per token."""
        return self.mel.n_frames / self.n_tokens


class SpeedStats(BaseModel):
    """Min/max frames-per-token ratio over the training split."""
    min_ratio: float = Field(description="Smallest T_mel / L_text on the train split")
    max_ratio: float = Field(description="Largest T_mel / L_text on the train split")


class Vocab(BaseModel):
    """Character vocabulary; id 0 is the reserved UNK symbol."""
    symbols: List[str] = Field(default_factory=lambda: ["<unk>"])

    UNK: ClassVar[int] = 0

    @property
    def size(self) -> int:
        return len(self.symbols)

    def index(self) -> Dict[str, int]:
        return {s: i for i, s in enumerate(self.symbols)}

    @classmethod
    def from_texts(cls, texts: List[str]) -> "Vocab":
        chars = sorted({ch for text in texts for ch in text})
        return cls(symbols=["<unk>"] + chars)


@dataclass
class Corpus:
    """A split-tagged collection of utterances with its vocabulary and speed stats."""
    utterances: List[Utterance]
    vocab: Vocab
    speed_stats: Optional[SpeedStats] = None
    sample_rate: int = 24000
    hop: int = 256
    n_speakers: int = 1
    name: str = "corpus"
    extra: Dict[str, str] = field(default_factory=dict)

    def split(self, name: str) -> List[Utterance]:
        return [u for u in self.utterances if u.split == name]

    @property
    def n_mels(self) -> int:
        return self.utterances[0].mel.n_mels if self.utterances else 0

    def ratio_range(self, split: str = "train") -> Optional[tuple]:
        ratios = [u.speed_ratio for u in self.split(split)]
        return (min(ratios), max(ratios)) if ratios else None
