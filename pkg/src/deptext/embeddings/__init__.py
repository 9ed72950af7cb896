"""Text embeddings: vocabularies, skip-gram training, vector tables and feature caching."""
from __future__ import annotations

from dataclasses import replace

from .features import (
    BERT_MAX_TOKENS,
    FRONTEND_DIMS,
    CacheCorruptionError,
    ContextualProvider,
    EmbeddingSpec,
    EmptyFeatureError,
    FeatureCache,
    FeatureSequence,
    ResolutionError,
    StubProvider,
    cache_roundtrip,
    embed_words,
    fetch_contextual,
    sentence_average,
)
from .skipgram import FASTTEXT, WORD2VEC, SkipGramConfig, train_skipgram
from .tables import EmbeddingTable, TableFormatError, load_pretrained_table, save_table
from .vocab import Vocab, build_vocab


def skipgram_config(spec: EmbeddingSpec, **overrides) -> SkipGramConfig:
    if spec.frontend == "word2vec":
        base = WORD2VEC
    elif spec.frontend == "fasttext":
        base = FASTTEXT
    else:
        raise ValueError(f"{spec.frontend} cannot be trained from scratch")
    return replace(base, dim=spec.dim, **overrides)


def train_static_embeddings(sentences, spec: EmbeddingSpec, seed: int = 0, **overrides) -> EmbeddingTable:
    """Train a from-scratch word2vec or fastText table for ``spec`` on ``sentences``."""
    if spec.pretrained:
        raise ValueError("train_static_embeddings is for from-scratch specs (pretrained=False)")
    return train_skipgram(sentences, skipgram_config(spec, **overrides), seed=seed)


def embed_static(session_id: str, sentences, spec: EmbeddingSpec, table: EmbeddingTable) -> FeatureSequence:
    if table.dim != spec.dim:
        raise ValueError(f"table dimension {table.dim} does not match {spec.frontend} ({spec.dim})")
    fn = embed_words if spec.level == "word" else sentence_average
    fs = fn(session_id, sentences, table)
    return replace(fs, frontend=spec.frontend)


__all__ = [
    "BERT_MAX_TOKENS", "FRONTEND_DIMS", "CacheCorruptionError", "ContextualProvider",
    "EmbeddingSpec", "EmptyFeatureError", "FeatureCache", "FeatureSequence", "ResolutionError",
    "StubProvider", "cache_roundtrip", "embed_words", "fetch_contextual", "sentence_average",
    "FASTTEXT", "WORD2VEC", "SkipGramConfig", "train_skipgram", "EmbeddingTable",
    "TableFormatError", "load_pretrained_table", "save_table", "Vocab", "build_vocab",
    "skipgram_config", "train_static_embeddings", "embed_static",
]
