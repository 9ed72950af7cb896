"""Transcript and label ingestion, response normalisation and corpus statistics."""
from __future__ import annotations

import csv
import io
import json
from collections import Counter
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator, Sequence


class CorpusFormatError(ValueError):
    """Input file does not follow the expected layout."""


class CorpusParseError(CorpusFormatError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class LabelValidationError(ValueError):
    pass


class Speaker(str, Enum):
    PARTICIPANT = "participant"
    INTERVIEWER = "interviewer"


@dataclass(frozen=True)
class Utterance:
    start_time: float
    stop_time: float
    speaker: Speaker
    text: str

    def __post_init__(self):
        if self.stop_time < self.start_time:
            raise ValueError(f"stop_time {self.stop_time} < start_time {self.start_time}")


@dataclass(frozen=True)
class SessionLabel:
    y_c: int
    y_r: int

    def __post_init__(self):
        if self.y_c not in (0, 1):
            raise LabelValidationError(f"binary label must be 0 or 1, got {self.y_c}")
        if not 0 <= self.y_r <= 24:
            raise LabelValidationError(f"PHQ-8 score must lie in [0, 24], got {self.y_r}")


@dataclass(frozen=True)
class Session:
    session_id: str
    utterances: tuple[Utterance, ...] = ()
    sentences: tuple[str, ...] = ()
    label: SessionLabel | None = None


@dataclass
class CorpusSplit:
    name: str
    sessions: list[Session] = field(default_factory=list)

    def __post_init__(self):
        if self.name not in ("train", "dev"):
            raise ValueError(f"split name must be 'train' or 'dev', got {self.name!r}")
        seen = Counter(s.session_id for s in self.sessions)
        dup = sorted(k for k, v in seen.items() if v > 1)
        if dup:
            raise ValueError(f"duplicate session ids in split {self.name}: {dup}")

    def __iter__(self) -> Iterator[Session]:
        return iter(self.sessions)

    def __len__(self) -> int:
        return len(self.sessions)


_TRANSCRIPT_COLUMNS = ("start_time", "stop_time", "speaker", "value")


def parse_transcript(raw_tsv: str, session_id: str) -> Session:
    """Parse a tab-separated transcript (start_time, stop_time, speaker, value)."""
    lines = raw_tsv.splitlines()
    header_idx = next((i for i, ln in enumerate(lines) if ln.strip()), None)
    if header_idx is None:
        raise CorpusFormatError("transcript is empty, expected a header row")
    header = [h.strip().lower() for h in lines[header_idx].split("\t")]
    if any(col not in header for col in _TRANSCRIPT_COLUMNS):
        raise CorpusFormatError(
            f"missing header: expected columns {_TRANSCRIPT_COLUMNS}, got {tuple(header)}"
        )
    cols = [header.index(c) for c in _TRANSCRIPT_COLUMNS]

    utterances = []
    for lineno, line in enumerate(lines[header_idx + 1:], start=header_idx + 2):
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != len(header):
            raise CorpusParseError(lineno, f"expected {len(header)} fields, got {len(fields)}")
        start, stop, speaker, text = (fields[c] for c in cols)
        try:
            start_f, stop_f = float(start), float(stop)
        except ValueError as e:
            raise CorpusParseError(lineno, f"bad timestamp: {e}") from None
        try:
            utt = Utterance(
                start_f,
                stop_f,
                Speaker.PARTICIPANT if speaker.strip().lower() == "participant" else Speaker.INTERVIEWER,
                text,
            )
        except ValueError as e:
            raise CorpusParseError(lineno, str(e)) from None
        utterances.append(utt)
    return Session(session_id=session_id, utterances=tuple(utterances))


def format_transcript(session: Session) -> str:
    """Inverse of :func:`parse_transcript`. Speaker names use DAIC-WOZ spelling."""
    out = ["\t".join(_TRANSCRIPT_COLUMNS)]
    for u in session.utterances:
        if "\t" in u.text or "\n" in u.text or "\r" in u.text:
            raise ValueError("utterance text cannot contain tabs or line breaks")
        name = "Participant" if u.speaker is Speaker.PARTICIPANT else "Ellie"
        out.append(f"{u.start_time!r}\t{u.stop_time!r}\t{name}\t{u.text}")
    return "\n".join(out) + "\n"


def normalize_text(text: str) -> str:
    return text.strip().lower()


def normalize_responses(session: Session) -> Session:
    """Fill ``sentences`` with the participant's lower-cased, trimmed responses."""
    sentences = []
    for u in session.utterances:
        if u.speaker is not Speaker.PARTICIPANT:
            continue
        s = normalize_text(u.text)
        if s:
            sentences.append(s)
    return replace(session, sentences=tuple(sentences))


def load_labels(raw_csv: str) -> dict[str, SessionLabel]:
    reader = csv.DictReader(io.StringIO(raw_csv))
    if reader.fieldnames is None:
        raise CorpusFormatError("label file is empty")
    names = {n.strip(): n for n in reader.fieldnames}
    required = ("Participant_ID", "PHQ8_Binary", "PHQ8_Score")
    missing = [c for c in required if c not in names]
    if missing:
        raise CorpusFormatError(f"label file missing columns: {missing}")

    labels: dict[str, SessionLabel] = {}
    for lineno, row in enumerate(reader, start=2):
        sid = row[names["Participant_ID"]].strip()
        if sid in labels:
            raise LabelValidationError(f"line {lineno}: duplicate Participant_ID {sid}")
        try:
            y_c = int(row[names["PHQ8_Binary"]])
            y_r = int(row[names["PHQ8_Score"]])
        except (TypeError, ValueError):
            raise LabelValidationError(f"line {lineno}: non-integer label") from None
        try:
            labels[sid] = SessionLabel(y_c, y_r)
        except LabelValidationError as e:
            raise LabelValidationError(f"line {lineno}: {e}") from None
    return labels


def tokenize(sentence: str) -> list[str]:
    return sentence.split()


def ngram_counts(split: Iterable[Session], n: int, label: int) -> list[tuple[str, int]]:
    """Whitespace n-gram counts over sessions with ``y_c == label``, most frequent first."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    counts: Counter[str] = Counter()
    for s in split:
        if s.label is None or s.label.y_c != label:
            continue
        for sent in s.sentences:
            toks = tokenize(sent)
            for i in range(len(toks) - n + 1):
                counts[" ".join(toks[i:i + n])] += 1
    return sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))


@dataclass
class CorpusStats:
    num_sessions: int
    num_sentences: int
    sentence_counts: dict[int, list[int]]
    word_counts: dict[int, list[int]]

    def as_dict(self) -> dict:
        def summary(v: list[int]) -> dict:
            if not v:
                return {"n": 0}
            return {"n": len(v), "min": min(v), "max": max(v), "mean": sum(v) / len(v)}

        return {
            "num_sessions": self.num_sessions,
            "num_sentences": self.num_sentences,
            "sentences_per_session": {str(k): summary(v) for k, v in sorted(self.sentence_counts.items())},
            "words_per_session": {str(k): summary(v) for k, v in sorted(self.word_counts.items())},
        }


def corpus_stats(split: Sequence[Session]) -> CorpusStats:
    """Session/sentence totals and per-class distributions of per-session lengths.

    Unlabelled sessions are grouped under class ``-1``.
    """
    sent_counts: dict[int, list[int]] = {}
    word_counts: dict[int, list[int]] = {}
    for s in split:
        cls = s.label.y_c if s.label is not None else -1
        sent_counts.setdefault(cls, []).append(len(s.sentences))
        word_counts.setdefault(cls, []).append(sum(len(tokenize(x)) for x in s.sentences))
    return CorpusStats(
        num_sessions=len(split),
        num_sentences=sum(len(s.sentences) for s in split),
        sentence_counts=sent_counts,
        word_counts=word_counts,
    )


# JSONL handoff -----------------------------------------------------------

def session_to_record(session: Session) -> dict:
    rec = {"session_id": session.session_id, "sentences": list(session.sentences)}
    if session.label is not None:
        rec["y_c"] = session.label.y_c
        rec["y_r"] = session.label.y_r
    else:
        rec["y_c"] = rec["y_r"] = None
    return rec


def session_from_record(rec: dict) -> Session:
    label = None
    if rec.get("y_c") is not None:
        label = SessionLabel(int(rec["y_c"]), int(rec["y_r"]))
    return Session(session_id=str(rec["session_id"]), sentences=tuple(rec["sentences"]), label=label)


def write_corpus(sessions: Iterable[Session], path: str | Path) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        for s in sessions:
            fh.write(json.dumps(session_to_record(s), ensure_ascii=False) + "\n")
    tmp.replace(path)


def read_corpus(path: str | Path) -> list[Session]:
    sessions = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                sessions.append(session_from_record(json.loads(line)))
    return sessions


def find_transcript(transcripts_dir: Path, session_id: str) -> Path:
    """Locate ``{id}_TRANSCRIPT.csv`` anywhere below ``transcripts_dir``."""
    name = f"{session_id}_TRANSCRIPT.csv"
    direct = transcripts_dir / name
    if direct.exists():
        return direct
    hits = sorted(transcripts_dir.rglob(name))
    if not hits:
        raise FileNotFoundError(f"no transcript {name} under {transcripts_dir}")
    return hits[0]


def prepare_split(transcripts_dir: str | Path, labels_path: str | Path, split: str) -> CorpusSplit:
    labels = load_labels(Path(labels_path).read_text(encoding="utf-8"))
    sessions = []
    for sid, label in labels.items():
        raw = find_transcript(Path(transcripts_dir), sid).read_text(encoding="utf-8")
        sess = normalize_responses(parse_transcript(raw, sid))
        sessions.append(replace(sess, label=label))
    return CorpusSplit(split, sessions)
