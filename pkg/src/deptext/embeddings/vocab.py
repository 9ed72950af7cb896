from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Iterable

from ..corpus import tokenize


@dataclass(frozen=True)
class Vocab:
    """Token index with occurrence counts; indices follow descending frequency.

    Tables read from disk carry no counts, so their ``min_count`` is 0.
    """

    index: dict[str, int]
    counts: dict[str, int]
    min_count: int = 1

    def __len__(self) -> int:
        return len(self.index)

    def __contains__(self, token: str) -> bool:
        return token in self.index

    @property
    def tokens(self) -> list[str]:
        out = [""] * len(self.index)
        for tok, i in self.index.items():
            out[i] = tok
        return out

    @classmethod
    def from_tokens(cls, tokens: Iterable[str]) -> "Vocab":
        tokens = list(tokens)
        return cls({t: i for i, t in enumerate(tokens)}, {t: 0 for t in tokens}, 0)


def build_vocab(sentences: Iterable[str], min_count: int = 5) -> Vocab:
    """Count whitespace tokens and keep those seen at least ``min_count`` times.

    Ties in frequency are ordered lexicographically so indices are deterministic.
    """
    if min_count < 1:
        raise ValueError(f"min_count must be >= 1, got {min_count}")
    counts = Counter(tok for s in sentences for tok in tokenize(s))
    if not counts:
        raise ValueError("cannot build a vocabulary from an empty corpus")
    kept = sorted((t for t, c in counts.items() if c >= min_count), key=lambda t: (-counts[t], t))
    return Vocab({t: i for i, t in enumerate(kept)}, {t: counts[t] for t in kept}, min_count)
