"""
Character-level tokenizer.
"""
from typing import List

from .schemas import Vocab


def tokenize(text: str, vocab: Vocab) -> List[int]:
    """
    Map characters to vocabulary ids; unseen characters map to UNK (0).

    Args:
        text: Input string
        vocab: Character vocabulary

    Returns:
        List of token ids
    """
    index = vocab.index()
    return [index.get(ch, Vocab.UNK) for ch in text]


def detokenize(tokens: List[int], vocab: Vocab) -> str:
    return "".join(vocab.symbols[t] if 0 < t < vocab.size else "?" for t in tokens)
