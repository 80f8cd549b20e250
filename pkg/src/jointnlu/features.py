"""Per-token character indices and binary word-shape flags."""
from __future__ import annotations

import unicodedata
from dataclasses import dataclass

import numpy as np

from .corpus import Vocabularies

DEFAULT_MAX_CHAR_LEN = 20
FLAG_NAMES = (
    "is_numeric",
    "starts_lowercase",
    "starts_uppercase",
    "all_uppercase",
    "contains_digit",
    "contains_punctuation",
)
N_FLAGS = len(FLAG_NAMES)


@dataclass(frozen=True)
class CharEncoding:
    ids: np.ndarray  # int64, length max_char_len, zero padded
    true_len: int


def char_encode(token: str, vocab: Vocabularies, max_char_len: int = DEFAULT_MAX_CHAR_LEN) -> CharEncoding:
    if max_char_len < 1:
        raise ValueError(f"max_char_len must be >= 1, got {max_char_len}")
    ids = np.zeros(max_char_len, dtype=np.int64)
    chars = token[:max_char_len]
    for i, ch in enumerate(chars):
        ids[i] = vocab.char_id(ch)
    return CharEncoding(ids, len(chars))


def word_flags(token: str) -> np.ndarray:
    """Six 0/1 shape features, in ``FLAG_NAMES`` order.

    ``all_uppercase`` means every character is an uppercase letter, so
    ``"U.S."`` does not qualify while ``"USA"`` does.
    """
    if not token:
        raise ValueError("word_flags needs a non-empty token")
    cats = [unicodedata.category(ch) for ch in token]
    first = cats[0]
    flags = (
        all(c == "Nd" for c in cats),
        first == "Ll",
        first in ("Lu", "Lt"),
        all(c == "Lu" for c in cats),
        any(c == "Nd" for c in cats),
        any(c.startswith("P") for c in cats),
    )
    return np.array(flags, dtype=np.float64)
