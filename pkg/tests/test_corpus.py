from collections import Counter

import pytest
from hypothesis import given, settings, strategies as st

from deptext import synth
from deptext.corpus import (
    CorpusParseError,
    CorpusSplit,
    LabelValidationError,
    Session,
    SessionLabel,
    Speaker,
    Utterance,
    corpus_stats,
    find_transcript,
    format_transcript,
    load_labels,
    ngram_counts,
    normalize_responses,
    parse_transcript,
    prepare_split,
    read_corpus,
    session_from_record,
    session_to_record,
    write_corpus,
)

HEADER = "start_time\tstop_time\tspeaker\tvalue\n"


def test_single_participant_row_passthrough():
    s = parse_transcript(HEADER + "1.2\t2.0\tParticipant\tHello There \n", "300")
    assert len(s.utterances) == 1
    u = s.utterances[0]
    assert u.text == "Hello There "
    assert u.speaker is Speaker.PARTICIPANT
    assert (u.start_time, u.stop_time) == (1.2, 2.0)


def test_ellie_is_interviewer():
    s = parse_transcript(HEADER + "0.0\t1.0\tEllie\thi\n", "300")
    assert s.utterances[0].speaker is Speaker.INTERVIEWER


def test_short_row_names_line():
    with pytest.raises(CorpusParseError) as e:
        parse_transcript(HEADER + "0.0\t1.0\tEllie\thi\n0.0\t1.0\tParticipant\n", "300")
    assert e.value.line == 3


def test_stop_before_start_rejected():
    with pytest.raises(ValueError):
        Utterance(2.0, 1.0, Speaker.PARTICIPANT, "x")


def test_normalize_lowercases_and_keeps_meta_tokens():
    raw = HEADER + "0\t1\tEllie\thow are you\n1\t2\tParticipant\tHello There \n2\t3\tParticipant\t<laughter> yes\n3\t4\tParticipant\t   \n"
    s = normalize_responses(parse_transcript(raw, "300"))
    assert s.sentences == ("hello there", "<laughter> yes")


def test_interviewer_only_session_has_no_sentences():
    s = normalize_responses(parse_transcript(HEADER + "0\t1\tEllie\thello\n", "300"))
    assert s.sentences == ()


def test_load_labels():
    labels = load_labels("Participant_ID,PHQ8_Binary,PHQ8_Score\n303,0,2\n")
    assert labels == {"303": SessionLabel(0, 2)}
    with pytest.raises(LabelValidationError):
        load_labels("Participant_ID,PHQ8_Binary,PHQ8_Score\n999,1,25\n")
    with pytest.raises(LabelValidationError):
        load_labels("Participant_ID,PHQ8_Binary,PHQ8_Score\n303,0,2\n303,1,12\n")


def _session(sid, sentences, y_c=0, y_r=0):
    return Session(sid, sentences=tuple(sentences), label=SessionLabel(y_c, y_r))


def test_ngram_examples():
    split = [_session("1", ["a b a"])]
    assert ngram_counts(split, 1, 0) == [("a", 2), ("b", 1)]
    assert ngram_counts(split, 2, 0) == [("a b", 1), ("b a", 1)]
    assert ngram_counts(split, 1, 1) == []


@settings(max_examples=50, deadline=None)
@given(st.lists(st.lists(st.sampled_from("abcd"), min_size=0, max_size=8), min_size=1, max_size=6),
       st.integers(1, 3))
def test_ngram_counts_match_brute_force(sents, n):
    split = [_session("1", [" ".join(s) for s in sents if s])]
    expected = Counter()
    for s in sents:
        for i in range(len(s) - n + 1):
            expected[" ".join(s[i:i + n])] += 1
    assert dict(ngram_counts(split, n, 0)) == dict(expected)


def test_stats_sum_sentences():
    st_ = corpus_stats([_session("1", ["x"] * 3), _session("2", ["y"] * 5, 1, 12)])
    assert st_.num_sessions == 2
    assert st_.num_sentences == 8
    assert st_.sentence_counts == {0: [3], 1: [5]}


def test_split_rejects_duplicate_ids():
    with pytest.raises(ValueError):
        CorpusSplit("train", [_session("1", ["x"]), _session("1", ["y"])])


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.booleans(), st.text(alphabet="abcXYZ <>_", min_size=1, max_size=12)), min_size=1, max_size=10))
def test_format_parse_roundtrip_and_sentence_invariants(rows):
    utts, t = [], 0.0
    for is_p, text in rows:
        utts.append(Utterance(t, t + 1.5, Speaker.PARTICIPANT if is_p else Speaker.INTERVIEWER, text))
        t += 2.0
    s = Session("7", utterances=tuple(utts))
    back = parse_transcript(format_transcript(s), "7")
    assert [u.text for u in back.utterances] == [u.text for u in utts]
    norm = normalize_responses(back)
    expected = [u.text.strip().lower() for u in utts if u.speaker is Speaker.PARTICIPANT and u.text.strip()]
    assert list(norm.sentences) == expected
    assert all(x == x.strip().lower() and x for x in norm.sentences)


def test_record_roundtrip(tmp_path):
    sessions = [_session("1", ["hello there"], 1, 15), Session("2", sentences=("a",))]
    assert [session_from_record(session_to_record(s)) for s in sessions] == sessions
    write_corpus(sessions, tmp_path / "c.jsonl")
    assert read_corpus(tmp_path / "c.jsonl") == sessions


def test_prepare_split_on_synthetic_files(tmp_path):
    paths = synth.generate(tmp_path, n_train=12, n_dev=6, train_pos=4, dev_pos=2, seed=3)
    split = prepare_split(paths["transcripts"], paths["train"], "train")
    assert len(split) == 12
    assert sum(s.label.y_c for s in split) == 4
    assert all(s.sentences for s in split)
    assert find_transcript(paths["transcripts"], split.sessions[0].session_id).exists()
    with pytest.raises(FileNotFoundError):
        find_transcript(paths["transcripts"], "999999")
