import heapq
import json
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from deptext.embeddings import (
    FASTTEXT,
    WORD2VEC,
    CacheCorruptionError,
    EmbeddingSpec,
    EmbeddingTable,
    EmptyFeatureError,
    FeatureCache,
    FeatureSequence,
    ResolutionError,
    StubProvider,
    TableFormatError,
    Vocab,
    build_vocab,
    cache_roundtrip,
    embed_static,
    embed_words,
    fetch_contextual,
    load_pretrained_table,
    save_table,
    sentence_average,
    train_skipgram,
    train_static_embeddings,
)
from deptext.embeddings.skipgram import char_ngrams, huffman_tree


def test_spec_dims_and_restrictions():
    assert {f: EmbeddingSpec(f).dim for f in ("word2vec", "fasttext", "elmo", "bert")} == {
        "word2vec": 300, "fasttext": 300, "elmo": 1024, "bert": 768}
    for bad in (dict(frontend="bert", level="word"), dict(frontend="elmo", pretrained=False),
                dict(frontend="glove"), dict(frontend="word2vec", level="para")):
        with pytest.raises(ValueError):
            EmbeddingSpec(**bad)


# vocab ---------------------------------------------------------------------

def test_min_count_filter():
    sents = ["rare common"] * 4 + ["common"] * 3
    v = build_vocab(sents, min_count=5)
    assert "rare" not in v and "common" in v
    assert set(build_vocab(sents, min_count=1).tokens) == {"rare", "common"}


@given(st.lists(st.lists(st.sampled_from("abcdefg"), max_size=10), min_size=1, max_size=20), st.integers(1, 6))
def test_vocab_matches_counter(sents, min_count):
    c = Counter(t for s in sents for t in s)
    expected = {t for t, n in c.items() if n >= min_count}
    if not expected:
        return
    v = build_vocab([" ".join(s) for s in sents], min_count)
    assert set(v.tokens) == expected
    assert all(v.counts[t] == c[t] >= min_count for t in v.tokens)
    assert sorted(v.index.values()) == list(range(len(v)))


# skip-gram -----------------------------------------------------------------

@given(st.lists(st.integers(1, 1000), min_size=2, max_size=40))
def test_huffman_is_optimal_prefix_code(counts):
    codes, points, lengths = huffman_tree(counts)
    V = len(counts)
    words = ["".join(map(str, codes[i, :lengths[i]])) for i in range(V)]
    assert len(set(words)) == V
    assert not any(a != b and b.startswith(a) for a in words for b in words)
    assert sum(2.0 ** -int(l) for l in lengths) == pytest.approx(1.0)
    # optimal cost equals the sum of all merge weights
    heap = list(counts)
    heapq.heapify(heap)
    cost = 0
    while len(heap) > 1:
        m = heapq.heappop(heap) + heapq.heappop(heap)
        cost += m
        heapq.heappush(heap, m)
    assert int(np.dot(counts, lengths)) == cost
    assert points.max() <= V - 2
    assert all(points[i, 0] == V - 2 for i in range(V))


def test_char_ngrams():
    assert char_ngrams("ab") == ["<ab", "ab>"]
    grams = char_ngrams("where")
    assert "<wh" in grams and "ere>" in grams and "<where>" not in grams
    assert all(3 <= len(g) <= 6 for g in grams)


def _topic_corpus(seed):
    """alpha and beta always share a sentence drawn from topic one; gamma appears
    on its own in topic-two sentences."""
    rng = np.random.default_rng(seed)
    topic1 = [f"p{i}" for i in range(25)]
    topic2 = [f"q{i}" for i in range(25)]
    sents = []
    for _ in range(400):
        if rng.random() < 0.5:
            s = list(rng.choice(topic1, 8))
            s.insert(int(rng.integers(0, 9)), "alpha")
            s.insert(int(rng.integers(0, 10)), "beta")
        else:
            s = list(rng.choice(topic2, 8))
            s.insert(int(rng.integers(0, 9)), "gamma")
        sents.append(" ".join(s))
    return sents


def _cos(t, a, b):
    x, y = t[a], t[b]
    return float(x @ y / np.linalg.norm(x) / np.linalg.norm(y))


@pytest.mark.parametrize("cfg", [WORD2VEC, FASTTEXT], ids=["word2vec", "fasttext"])
def test_cooccurring_tokens_are_closer(cfg):
    from dataclasses import replace

    cfg = replace(cfg, dim=50)
    for seed in range(5):
        t = train_skipgram(_topic_corpus(seed), cfg, seed=seed)
        assert _cos(t, "alpha", "beta") > _cos(t, "alpha", "gamma")


def test_backends_agree_and_are_deterministic():
    from dataclasses import replace

    sents = _topic_corpus(0)[:100]
    cfg = replace(WORD2VEC, dim=16, epochs=2)
    a = train_skipgram(sents, cfg, seed=3, backend="numba")
    b = train_skipgram(sents, cfg, seed=3, backend="numpy")
    c = train_skipgram(sents, cfg, seed=3, backend="numba")
    np.testing.assert_array_equal(a.vectors, c.vectors)
    np.testing.assert_allclose(a.vectors, b.vectors, atol=1e-4)


def test_scratch_table_shape_and_filter():
    sents = _topic_corpus(1) + ["rareword w1 w2"] * 2
    t = train_static_embeddings(sents, EmbeddingSpec("word2vec", pretrained=False), seed=0, epochs=1)
    assert t.vectors.shape == (len(t.vocab), 300)
    assert "rareword" not in t
    with pytest.raises(ValueError):
        train_static_embeddings(sents, EmbeddingSpec("word2vec", pretrained=True))
    with pytest.raises(ValueError):
        train_skipgram(["a a a a a"], WORD2VEC)


# tables --------------------------------------------------------------------

def test_table_load_save(tmp_path):
    p = tmp_path / "v.txt"
    p.write_text("hello 0.1 0.2 0.3\nworld 1 2 3\nhello 9 9 9\n")
    t = load_pretrained_table(p)
    assert len(t.vocab) == 2 and t.dim == 3
    np.testing.assert_allclose(t["hello"], [0.1, 0.2, 0.3], rtol=1e-6)
    save_table(t, tmp_path / "out.txt")
    back = load_pretrained_table(tmp_path / "out.txt")
    assert back.vocab.tokens == t.vocab.tokens
    np.testing.assert_allclose(back.vectors, t.vectors, atol=1e-6)
    bad = tmp_path / "bad.txt"
    bad.write_text("2 3\na 1 2 3\nb 1 2\n")
    with pytest.raises(TableFormatError, match="line 3"):
        load_pretrained_table(bad)


def test_table_rejects_non_finite():
    with pytest.raises(ValueError):
        EmbeddingTable(Vocab.from_tokens(["a"]), np.array([[np.nan, 1.0]]))


# features ------------------------------------------------------------------

TABLE = EmbeddingTable(Vocab.from_tokens(["a", "b", "c"]), np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]], np.float32))


def test_word_level():
    assert embed_words("1", ["a b"], TABLE).T == 2
    fs = embed_words("1", ["a unkword b"], TABLE)
    assert fs.T == 2
    np.testing.assert_array_equal(fs.X, [[1, 2], [3, 4]])
    with pytest.raises(EmptyFeatureError):
        embed_words("1", ["zzz"], TABLE)


@given(st.lists(st.lists(st.sampled_from(["a", "b", "c", "x", "y"]), max_size=6), min_size=1, max_size=5))
def test_word_level_length_matches_scan(sents):
    n = sum(t in TABLE for s in sents for t in s)
    text = [" ".join(s) for s in sents]
    if n == 0:
        with pytest.raises(EmptyFeatureError):
            embed_words("1", text, TABLE)
    else:
        assert embed_words("1", text, TABLE).T == n


def test_sentence_average():
    np.testing.assert_allclose(sentence_average("1", ["a b"], TABLE).X, [[2, 3]])
    np.testing.assert_allclose(sentence_average("1", ["c"], TABLE).X, [[5, 6]])
    fs = sentence_average("1", ["a b", "zzz"], TABLE)
    assert fs.T == 2 and not fs.X[1].any()
    rng = np.random.default_rng(0)
    vocab = [f"t{i}" for i in range(20)]
    big = EmbeddingTable(Vocab.from_tokens(vocab), rng.normal(size=(20, 7)).astype(np.float32))
    words = list(rng.choice(vocab, 5))
    expected = sum(big[w].astype(np.float64) for w in words) / 5
    np.testing.assert_allclose(sentence_average("1", [" ".join(words)], big).X[0], expected, atol=1e-6)


def test_embed_static_checks_dim():
    with pytest.raises(ValueError):
        embed_static("1", ["a"], EmbeddingSpec("word2vec"), TABLE)


def test_contextual_truncation_and_dims():
    p = StubProvider("bert", dim=8)
    fetch_contextual("1", [" ".join(f"w{i}" for i in range(130))], p)
    assert len(p.calls[0]) == 125 and p.calls[0][-1] == "w124"
    fs = fetch_contextual("1", ["hello there", "yes"], StubProvider("elmo"))
    assert fs.X.shape == (2, 1024)
    fs = fetch_contextual("1", ["a b", "c d e", "f"], StubProvider("bert", dim=4, constant=0.5))
    np.testing.assert_allclose(fs.X, 0.5)


def test_contextual_cache_resolution(tmp_path):
    cache = FeatureCache(tmp_path, "bert", True)
    with pytest.raises(ResolutionError):
        fetch_contextual("1", ["a"], None, cache)
    p = StubProvider("bert", dim=4)
    first = fetch_contextual("1", ["a b"], p, cache)
    again = fetch_contextual("1", ["a b"], None, cache)
    np.testing.assert_array_equal(first.X, again.X)
    assert len(p.calls) == 1


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 20), st.integers(1, 10), st.integers(0, 2**31))
def test_cache_roundtrip(T, D, seed):
    import tempfile

    X = np.random.default_rng(seed).normal(size=(T, D)).astype(np.float32)
    fs = FeatureSequence("300", "word", X, "word2vec")
    with tempfile.TemporaryDirectory() as d:
        back = cache_roundtrip(fs, d)
    assert back.session_id == "300" and back.level == "word"
    np.testing.assert_array_equal(back.X, X)


def test_cache_corruption(tmp_path):
    cache = FeatureCache(tmp_path)
    cache.write(FeatureSequence("1", "sentence", np.ones((3, 4), np.float32)))
    payload = tmp_path / "1.f32"
    payload.write_bytes(payload.read_bytes()[:-4])
    with pytest.raises(CacheCorruptionError):
        cache.read("1")
    cache.write(FeatureSequence("2", "sentence", np.ones((3, 4), np.float32)))
    m = json.loads((tmp_path / "2.json").read_text())
    m["D"] = 5
    (tmp_path / "2.json").write_text(json.dumps(m))
    with pytest.raises(CacheCorruptionError):
        cache.read("2")
    with pytest.raises(ValueError):
        cache.has("../etc")


def test_feature_sequence_rejects_non_finite():
    with pytest.raises(ValueError):
        FeatureSequence("1", "word", np.array([[np.inf]]))
