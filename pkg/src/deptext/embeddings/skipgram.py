"""Skip-gram with hierarchical softmax, word-level (word2vec) or with
character n-gram input units (fastText).

Both variants share one kernel: each vocabulary word owns a list of input
rows (just itself for word2vec; itself plus its n-grams for fastText). The
hidden vector is the mean of those rows, the target is a context word's
Huffman path, and the input gradient is added to every row.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import asdict, dataclass

import numpy as np

from .._accel import USE_NUMBA, njit
from ..corpus import tokenize
from .tables import EmbeddingTable
from .vocab import Vocab, build_vocab


@dataclass(frozen=True)
class SkipGramConfig:
    dim: int = 300
    window: int = 5
    min_count: int = 5
    epochs: int = 5
    alpha: float = 0.025
    min_alpha: float = 0.0001
    subwords: bool = False
    min_n: int = 3
    max_n: int = 6

    def as_dict(self) -> dict:
        return asdict(self)


WORD2VEC = SkipGramConfig()
FASTTEXT = SkipGramConfig(epochs=8, alpha=0.05, subwords=True)


def huffman_tree(counts) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Huffman codes over ``counts``; returns ``(codes, points, lengths)``.

    ``codes[i, :lengths[i]]`` are the branch bits from the root to leaf ``i`` and
    ``points[i, :lengths[i]]`` the inner nodes visited (0 .. V-2, root = V-2).
    """
    V = len(counts)
    if V < 2:
        raise ValueError("hierarchical softmax needs at least two vocabulary words")
    heap = [(int(c), i) for i, c in enumerate(counts)]
    heapq.heapify(heap)
    parent = np.zeros(2 * V - 1, dtype=np.int64)
    bit = np.zeros(2 * V - 1, dtype=np.int8)
    nxt = V
    while len(heap) > 1:
        c1, a = heapq.heappop(heap)
        c2, b = heapq.heappop(heap)
        parent[a], bit[a] = nxt, 0
        parent[b], bit[b] = nxt, 1
        heapq.heappush(heap, (c1 + c2, nxt))
        nxt += 1
    root = nxt - 1
    paths = []
    for i in range(V):
        cs, ps = [], []
        node = i
        while node != root:
            cs.append(bit[node])
            ps.append(parent[node] - V)
            node = parent[node]
        paths.append((cs[::-1], ps[::-1]))
    maxlen = max(len(c) for c, _ in paths)
    codes = np.zeros((V, maxlen), dtype=np.int8)
    points = np.zeros((V, maxlen), dtype=np.int32)
    lengths = np.zeros(V, dtype=np.int32)
    for i, (cs, ps) in enumerate(paths):
        lengths[i] = len(cs)
        codes[i, :len(cs)] = cs
        points[i, :len(ps)] = ps
    return codes, points, lengths


def char_ngrams(word: str, min_n: int = 3, max_n: int = 6) -> list[str]:
    """Character n-grams of ``<word>``, excluding the bracketed word itself."""
    w = f"<{word}>"
    out = []
    for n in range(min_n, max_n + 1):
        for i in range(len(w) - n + 1):
            g = w[i:i + n]
            if g != w:
                out.append(g)
    return out


def _input_rows(vocab: Vocab, cfg: SkipGramConfig) -> tuple[np.ndarray, np.ndarray, int]:
    V = len(vocab)
    ptr = [0]
    idx: list[int] = []
    ngram_ids: dict[str, int] = {}
    for i, tok in enumerate(vocab.tokens):
        idx.append(i)
        if cfg.subwords:
            for g in dict.fromkeys(char_ngrams(tok, cfg.min_n, cfg.max_n)):
                idx.append(V + ngram_ids.setdefault(g, len(ngram_ids)))
        ptr.append(len(idx))
    return np.asarray(ptr, dtype=np.int64), np.asarray(idx, dtype=np.int64), V + len(ngram_ids)


@njit
def _epoch_nb(tokens, sent_ptr, shrink, sub_ptr, sub_idx, codes, points, lengths,
              syn0, syn1, window, alpha0, min_alpha, done0, total):
    D = syn0.shape[1]
    h = np.empty(D, dtype=syn0.dtype)
    neu1e = np.empty(D, dtype=syn0.dtype)
    done = done0
    for s in range(sent_ptr.shape[0] - 1):
        lo = sent_ptr[s]
        hi = sent_ptr[s + 1]
        for i in range(lo, hi):
            alpha = alpha0 - (alpha0 - min_alpha) * done / total
            if alpha < min_alpha:
                alpha = min_alpha
            done += 1
            w = tokens[i]
            r0 = sub_ptr[w]
            r1 = sub_ptr[w + 1]
            for d in range(D):
                h[d] = 0.0
            for k in range(r0, r1):
                row = sub_idx[k]
                for d in range(D):
                    h[d] += syn0[row, d]
            inv = 1.0 / (r1 - r0)
            for d in range(D):
                h[d] *= inv
            b = shrink[i]
            c_lo = max(lo, i - window + b)
            c_hi = min(hi, i + window - b + 1)
            for c in range(c_lo, c_hi):
                if c == i:
                    continue
                target = tokens[c]
                for d in range(D):
                    neu1e[d] = 0.0
                for j in range(lengths[target]):
                    p = points[target, j]
                    f = 0.0
                    for d in range(D):
                        f += h[d] * syn1[p, d]
                    f = 1.0 / (1.0 + math.exp(-f))
                    g = (1.0 - codes[target, j] - f) * alpha
                    for d in range(D):
                        neu1e[d] += g * syn1[p, d]
                        syn1[p, d] += g * h[d]
                for k in range(r0, r1):
                    row = sub_idx[k]
                    for d in range(D):
                        syn0[row, d] += neu1e[d]
                # every input row moved by neu1e, so their mean did too
                for d in range(D):
                    h[d] += neu1e[d]
    return done


def _epoch_np(tokens, sent_ptr, shrink, sub_ptr, sub_idx, codes, points, lengths,
              syn0, syn1, window, alpha0, min_alpha, done0, total):
    done = done0
    for s in range(len(sent_ptr) - 1):
        lo, hi = sent_ptr[s], sent_ptr[s + 1]
        for i in range(lo, hi):
            alpha = max(alpha0 - (alpha0 - min_alpha) * done / total, min_alpha)
            done += 1
            w = tokens[i]
            rows = sub_idx[sub_ptr[w]:sub_ptr[w + 1]]
            h = syn0[rows].mean(axis=0)
            b = shrink[i]
            for c in range(max(lo, i - window + b), min(hi, i + window - b + 1)):
                if c == i:
                    continue
                target = tokens[c]
                L = lengths[target]
                pts = points[target, :L]
                out = syn1[pts]
                f = 1.0 / (1.0 + np.exp(-(out @ h)))
                g = ((1.0 - codes[target, :L] - f) * alpha).astype(syn0.dtype)
                neu1e = g @ out
                syn1[pts] += np.outer(g, h)
                syn0[rows] += neu1e
                h = h + neu1e
    return done


def _encode(sentences, vocab: Vocab):
    ids: list[int] = []
    ptr = [0]
    for s in sentences:
        ids.extend(vocab.index[t] for t in tokenize(s) if t in vocab.index)
        ptr.append(len(ids))
    return np.asarray(ids, dtype=np.int64), np.asarray(ptr, dtype=np.int64)


def train_skipgram(sentences, cfg: SkipGramConfig = WORD2VEC, seed: int = 0,
                   backend: str | None = None) -> EmbeddingTable:
    """Train skip-gram/HS vectors on ``sentences``; single-threaded and seed-deterministic."""
    sentences = list(sentences)
    vocab = build_vocab(sentences, cfg.min_count)
    tokens, sent_ptr = _encode(sentences, vocab)
    if len(tokens) < 2 * cfg.window + 1:
        raise ValueError(
            f"corpus has {len(tokens)} in-vocabulary tokens, fewer than one full window ({2 * cfg.window + 1})"
        )
    codes, points, lengths = huffman_tree([vocab.counts[t] for t in vocab.tokens])
    sub_ptr, sub_idx, n_rows = _input_rows(vocab, cfg)

    rng = np.random.default_rng(seed)
    syn0 = ((rng.random((n_rows, cfg.dim)) - 0.5) / cfg.dim).astype(np.float32)
    syn1 = np.zeros((len(vocab) - 1, cfg.dim), dtype=np.float32)

    use_nb = USE_NUMBA if backend is None else backend == "numba"
    kernel = _epoch_nb if use_nb else _epoch_np
    total = float(cfg.epochs * len(tokens))
    done = 0
    for _ in range(cfg.epochs):
        shrink = rng.integers(0, cfg.window, size=len(tokens)).astype(np.int64)
        done = kernel(tokens, sent_ptr, shrink, sub_ptr, sub_idx, codes, points, lengths,
                      syn0, syn1, cfg.window, cfg.alpha, cfg.min_alpha, done, total)

    if cfg.subwords:
        vectors = np.vstack([syn0[sub_idx[sub_ptr[i]:sub_ptr[i + 1]]].mean(axis=0) for i in range(len(vocab))])
    else:
        vectors = syn0[:len(vocab)].copy()
    return EmbeddingTable(vocab, vectors.astype(np.float32))
