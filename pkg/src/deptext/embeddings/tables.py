from __future__ import annotations

import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .vocab import Vocab


class TableFormatError(ValueError):
    pass


@dataclass(frozen=True)
class EmbeddingTable:
    vocab: Vocab
    vectors: np.ndarray

    def __post_init__(self):
        if self.vectors.ndim != 2 or self.vectors.shape[0] != len(self.vocab):
            raise ValueError(
                f"vectors shape {self.vectors.shape} does not match vocabulary size {len(self.vocab)}"
            )
        if not np.isfinite(self.vectors).all():
            raise ValueError("embedding table contains non-finite values")
        self.vectors.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __contains__(self, token: str) -> bool:
        return token in self.vocab

    def __getitem__(self, token: str) -> np.ndarray:
        return self.vectors[self.vocab.index[token]]


def load_pretrained_table(path: str | Path, dtype=np.float32) -> EmbeddingTable:
    """Read the word2vec text format: optional ``count dim`` header, then ``token v1 .. vD``.

    Repeated tokens keep their first vector.
    """
    tokens: list[str] = []
    rows: list[np.ndarray] = []
    seen: set[str] = set()
    dim = None
    with open(path, encoding="utf-8", errors="replace") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.rstrip("\n\r").split(" ")
            if parts and parts[-1] == "":
                parts = parts[:-1]
            if not parts:
                continue
            if lineno == 1 and len(parts) == 2 and all(p.isdigit() for p in parts):
                dim = int(parts[1])
                continue
            if dim is None:
                dim = len(parts) - 1
            if len(parts) - 1 != dim:
                raise TableFormatError(f"line {lineno}: expected {dim} values, got {len(parts) - 1}")
            tok = parts[0]
            if tok in seen:
                continue
            try:
                vec = np.array(parts[1:], dtype=dtype)
            except ValueError:
                raise TableFormatError(f"line {lineno}: non-numeric vector entry") from None
            seen.add(tok)
            tokens.append(tok)
            rows.append(vec)
    if not rows:
        raise TableFormatError(f"{path} holds no vectors")
    return EmbeddingTable(Vocab.from_tokens(tokens), np.vstack(rows))


def save_table(table: EmbeddingTable, path: str | Path) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    with os.fdopen(fd, "w", encoding="utf-8") as fh:
        fh.write(f"{len(table.vocab)} {table.dim}\n")
        for tok, vec in zip(table.vocab.tokens, table.vectors):
            fh.write(tok + " " + " ".join(repr(float(x)) for x in vec) + "\n")
    os.replace(tmp, path)
