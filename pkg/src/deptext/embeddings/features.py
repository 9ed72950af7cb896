"""Per-session feature sequences: word-level lookup, sentence averages,
contextual encoders, and the on-disk feature cache."""
from __future__ import annotations

import json
import os
import re
import tempfile
import zlib
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from ..corpus import tokenize
from .tables import EmbeddingTable

FRONTEND_DIMS = {"word2vec": 300, "fasttext": 300, "elmo": 1024, "bert": 768}
BERT_MAX_TOKENS = 125


class EmptyFeatureError(ValueError):
    """A session produced no feature rows."""


class ResolutionError(RuntimeError):
    """Contextual features requested with neither a provider nor a cache entry."""


class CacheCorruptionError(RuntimeError):
    pass


@dataclass(frozen=True)
class EmbeddingSpec:
    frontend: str
    level: str = "sentence"
    pretrained: bool = True

    def __post_init__(self):
        if self.frontend not in FRONTEND_DIMS:
            raise ValueError(f"unknown frontend {self.frontend!r}; expected one of {sorted(FRONTEND_DIMS)}")
        if self.level not in ("word", "sentence"):
            raise ValueError(f"level must be 'word' or 'sentence', got {self.level!r}")
        if self.frontend in ("elmo", "bert") and (self.level != "sentence" or not self.pretrained):
            raise ValueError(f"{self.frontend} is only available pretrained at sentence level")

    @property
    def dim(self) -> int:
        return FRONTEND_DIMS[self.frontend]

    @property
    def key(self) -> str:
        return f"{self.frontend}-{self.level}-{'pretrained' if self.pretrained else 'scratch'}"

    def as_dict(self) -> dict:
        return {**asdict(self), "dim": self.dim}


@dataclass(frozen=True)
class FeatureSequence:
    session_id: str
    level: str
    X: np.ndarray
    frontend: str = ""

    def __post_init__(self):
        if self.X.ndim != 2:
            raise ValueError(f"feature matrix must be 2-D, got shape {self.X.shape}")
        if not np.isfinite(self.X).all():
            raise ValueError(f"session {self.session_id}: non-finite features")

    @property
    def T(self) -> int:
        return self.X.shape[0]

    @property
    def D(self) -> int:
        return self.X.shape[1]


def embed_words(session_id: str, sentences: Sequence[str], table: EmbeddingTable) -> FeatureSequence:
    """One row per in-vocabulary token, in transcript order; unknown tokens are skipped."""
    idx = [table.vocab.index[t] for s in sentences for t in tokenize(s) if t in table.vocab.index]
    if not idx:
        raise EmptyFeatureError(f"session {session_id}: no in-vocabulary tokens")
    return FeatureSequence(session_id, "word", table.vectors[idx].astype(np.float32))


def sentence_average(session_id: str, sentences: Sequence[str], table: EmbeddingTable) -> FeatureSequence:
    """One row per sentence: the mean of its in-vocabulary word vectors, or zeros if none."""
    if not sentences:
        raise EmptyFeatureError(f"session {session_id}: no sentences")
    X = np.zeros((len(sentences), table.dim), dtype=np.float32)
    for j, s in enumerate(sentences):
        idx = [table.vocab.index[t] for t in tokenize(s) if t in table.vocab.index]
        if idx:
            X[j] = table.vectors[idx].mean(axis=0, dtype=np.float64)
    return FeatureSequence(session_id, "sentence", X)


# Contextual encoders ---------------------------------------------------------

class ContextualProvider(Protocol):
    """Anything that maps a token list to per-layer token vectors.

    ``frontend`` is ``"elmo"`` or ``"bert"``; ``layer_outputs`` returns an array
    of shape (num_layers, num_tokens, dim).
    """

    frontend: str
    dim: int
    max_tokens: int | None

    def layer_outputs(self, tokens: list[str]) -> np.ndarray: ...


def contextual_sentence_vector(tokens: list[str], provider: ContextualProvider) -> np.ndarray:
    limit = provider.max_tokens
    if provider.frontend == "bert":
        limit = BERT_MAX_TOKENS if limit is None else min(limit, BERT_MAX_TOKENS)
    if limit is not None:
        tokens = tokens[:limit]
    layers = np.asarray(provider.layer_outputs(tokens), dtype=np.float64)
    if layers.ndim != 3 or layers.shape[1] != len(tokens) or layers.shape[2] != provider.dim:
        raise ValueError(f"provider returned shape {layers.shape} for {len(tokens)} tokens")
    if provider.frontend == "bert":
        return layers[-2].mean(axis=0)
    if provider.frontend == "elmo":
        return layers.mean(axis=0).mean(axis=0)
    raise ValueError(f"unsupported contextual frontend {provider.frontend!r}")


def fetch_contextual(session_id: str, sentences: Sequence[str], provider: ContextualProvider | None,
                     cache: "FeatureCache | None" = None) -> FeatureSequence:
    """Sentence-level contextual features, served from ``cache`` when present."""
    if cache is not None and cache.has(session_id):
        return cache.read(session_id)
    if provider is None:
        raise ResolutionError(f"session {session_id}: no contextual provider and no cached features")
    if not sentences:
        raise EmptyFeatureError(f"session {session_id}: no sentences")
    X = np.vstack([contextual_sentence_vector(tokenize(s), provider) for s in sentences]).astype(np.float32)
    fs = FeatureSequence(session_id, "sentence", X, provider.frontend)
    if cache is not None:
        cache.write(fs)
    return fs


class StubProvider:
    """Deterministic stand-in encoder for tests and offline runs.

    Token vectors come from a hash-seeded generator; deeper layers mix in the
    sentence mean so outputs depend on context. ``constant`` makes every token
    vector equal to ``constant``.
    """

    def __init__(self, frontend: str = "bert", dim: int | None = None, num_layers: int | None = None,
                 max_tokens: int | None = None, constant: float | None = None):
        self.frontend = frontend
        self.dim = dim if dim is not None else FRONTEND_DIMS[frontend]
        self.num_layers = num_layers if num_layers is not None else (3 if frontend == "elmo" else 12)
        self.max_tokens = max_tokens
        self.constant = constant
        self.calls: list[list[str]] = []

    def _token_vector(self, tok: str) -> np.ndarray:
        rng = np.random.default_rng(zlib.crc32(tok.encode("utf-8")))
        return rng.standard_normal(self.dim)

    def layer_outputs(self, tokens: list[str]) -> np.ndarray:
        self.calls.append(list(tokens))
        if self.constant is not None:
            return np.full((self.num_layers, len(tokens), self.dim), self.constant)
        base = np.vstack([self._token_vector(t) for t in tokens])
        ctx = base.mean(axis=0, keepdims=True)
        return np.stack([np.tanh(base + 0.1 * layer * ctx) for layer in range(self.num_layers)])


class HuggingFaceBertProvider:  # pragma: no cover - needs downloaded weights
    """Adapter for a locally available ``transformers`` BERT checkpoint."""

    frontend = "bert"

    def __init__(self, name_or_path: str = "bert-base-uncased", max_tokens: int = BERT_MAX_TOKENS):
        import torch
        from transformers import AutoModel, AutoTokenizer

        self._torch = torch
        self.tokenizer = AutoTokenizer.from_pretrained(name_or_path)
        self.model = AutoModel.from_pretrained(name_or_path, output_hidden_states=True).eval()
        self.dim = self.model.config.hidden_size
        self.max_tokens = max_tokens

    def layer_outputs(self, tokens: list[str]) -> np.ndarray:
        # wordpieces are pooled back to whitespace tokens so the shape contract holds
        enc = self.tokenizer(tokens, is_split_into_words=True, truncation=True,
                             max_length=self.max_tokens + 2, return_tensors="pt")
        with self._torch.no_grad():
            hidden = self.model(**enc).hidden_states
        word_ids = enc.word_ids(0)
        out = np.zeros((len(hidden), len(tokens), self.dim))
        counts = np.zeros(len(tokens))
        for pos, wid in enumerate(word_ids):
            if wid is not None:
                counts[wid] += 1
                for layer, h in enumerate(hidden):
                    out[layer, wid] += h[0, pos].numpy()
        return out / np.maximum(counts, 1)[None, :, None]


# Feature cache -----------------------------------------------------------------

_SAFE_ID = re.compile(r"^[A-Za-z0-9_.\-]+$")
SPEC_FILE = "spec.json"


def _atomic_write(path: Path, data: bytes) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class FeatureCache:
    """Directory of ``{session_id}.json`` manifests with ``{session_id}.f32`` payloads."""

    def __init__(self, root: str | Path, frontend: str = "", pretrained: bool | None = None):
        self.root = Path(root)
        self.frontend = frontend
        self.pretrained = pretrained

    def _paths(self, session_id: str) -> tuple[Path, Path]:
        if not _SAFE_ID.match(session_id):
            raise ValueError(f"session id {session_id!r} is not usable as a file name")
        return self.root / f"{session_id}.json", self.root / f"{session_id}.f32"

    def has(self, session_id: str) -> bool:
        return all(p.exists() for p in self._paths(session_id))

    def write(self, fs: FeatureSequence) -> None:
        self.root.mkdir(parents=True, exist_ok=True)
        manifest_path, payload_path = self._paths(fs.session_id)
        manifest = {
            "session_id": fs.session_id,
            "frontend": fs.frontend or self.frontend,
            "level": fs.level,
            "pretrained": self.pretrained,
            "D": fs.D,
            "T": fs.T,
            "dtype": "f32",
            "byte_order": "little",
        }
        _atomic_write(payload_path, np.ascontiguousarray(fs.X, dtype="<f4").tobytes())
        _atomic_write(manifest_path, json.dumps(manifest).encode())

    def read(self, session_id: str) -> FeatureSequence:
        manifest_path, payload_path = self._paths(session_id)
        try:
            manifest = json.loads(manifest_path.read_text())
            payload = payload_path.read_bytes()
        except FileNotFoundError:
            raise KeyError(session_id) from None
        T, D = int(manifest["T"]), int(manifest["D"])
        if manifest.get("dtype") != "f32" or manifest.get("byte_order") != "little":
            raise CacheCorruptionError(f"{session_id}: unsupported payload encoding")
        if D < 1 or len(payload) % (4 * D) != 0:
            raise CacheCorruptionError(f"{session_id}: payload of {len(payload)} bytes is not a whole number of {D}-wide rows")
        if len(payload) != 4 * T * D:
            raise CacheCorruptionError(f"{session_id}: payload is {len(payload)} bytes, manifest says {T}x{D} float32")
        X = np.frombuffer(payload, dtype="<f4").reshape(T, D).astype(np.float32)
        return FeatureSequence(manifest["session_id"], manifest["level"], X, manifest.get("frontend", ""))

    def session_ids(self) -> list[str]:
        return sorted(p.stem for p in self.root.glob("*.f32"))

    def write_spec(self, spec: EmbeddingSpec, settings: dict | None = None) -> None:
        self.root.mkdir(parents=True, exist_ok=True)
        body = {"embedding": spec.as_dict(), "settings": settings or {}}
        _atomic_write(self.root / SPEC_FILE, json.dumps(body, indent=1).encode())

    def read_spec(self) -> tuple[EmbeddingSpec, dict]:
        body = json.loads((self.root / SPEC_FILE).read_text())
        emb = dict(body["embedding"])
        emb.pop("dim", None)
        return EmbeddingSpec(**emb), body.get("settings", {})

    def load_all(self, session_ids) -> dict[str, FeatureSequence]:
        missing = [s for s in session_ids if not self.has(s)]
        if missing:
            raise KeyError(f"no cached features for sessions {missing}")
        return {s: self.read(s) for s in session_ids}


def cache_roundtrip(fs: FeatureSequence, directory: str | Path) -> FeatureSequence:
    cache = FeatureCache(directory)
    cache.write(fs)
    return cache.read(fs.session_id)
