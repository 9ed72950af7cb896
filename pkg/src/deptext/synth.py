"""Synthetic interview corpus in DAIC-WOZ file layout.

Depressed sessions draw marker tokens more often; the marker rate grows with
the PHQ-8 score, so both the binary state and the score are recoverable from
the participant's text.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

NEUTRAL = (
    "i yeah um uh like you know so and the a it was is that to of my in just "
    "really okay well think kind go went do did have work school family friends "
    "home good time day thing things people pretty lot right now then when "
    "about what maybe sure mean guess actually stuff much more"
).split()

MARKERS = (
    "tired hopeless <sigh> alone sad sleep worthless empty exhausted "
    "crying anxious numb"
).split()

PROMPTS = (
    "how are you doing today",
    "where are you from originally",
    "what do you do to relax",
    "how have you been feeling lately",
    "when was the last time you felt really happy",
    "tell me more about that",
    "how easy is it for you to get a good night's sleep",
    "what are you most proud of in your life",
)


@dataclass(frozen=True)
class SynthConfig:
    min_sentences: int = 15
    max_sentences: int = 30
    min_words: int = 4
    max_words: int = 10
    base_marker_rate: float = 0.03
    marker_slope: float = 0.30
    # extra marker rate for depressed sessions; separates the classes at the
    # PHQ-8 >= 10 boundary
    class_offset: float = 0.12


def _score(rng, y_c: int) -> int:
    return int(rng.integers(10, 25)) if y_c else int(rng.integers(0, 10))


def _sentence(rng, rate: float, cfg: SynthConfig) -> str:
    n = int(rng.integers(cfg.min_words, cfg.max_words + 1))
    is_marker = rng.random(n) < rate
    words = [
        MARKERS[rng.integers(len(MARKERS))] if m else NEUTRAL[rng.integers(len(NEUTRAL))]
        for m in is_marker
    ]
    text = " ".join(words)
    # raw transcripts carry capitalisation and trailing blanks
    if rng.random() < 0.3:
        text = text[:1].upper() + text[1:]
    if rng.random() < 0.2:
        text += " "
    return text


def marker_rate(score: int, y_c: int, cfg: SynthConfig) -> float:
    return cfg.base_marker_rate + cfg.marker_slope * score / 24.0 + cfg.class_offset * y_c


def session_transcript(rng, score: int, y_c: int, cfg: SynthConfig = SynthConfig()) -> str:
    rate = marker_rate(score, y_c, cfg)
    n = int(rng.integers(cfg.min_sentences, cfg.max_sentences + 1))
    lines = ["start_time\tstop_time\tspeaker\tvalue"]
    t = 0.0
    for _ in range(n):
        if rng.random() < 0.7:
            dur = round(float(rng.uniform(1.0, 3.0)), 3)
            lines.append(f"{t:.3f}\t{t + dur:.3f}\tEllie\t{PROMPTS[rng.integers(len(PROMPTS))]}")
            t += dur + 0.5
        dur = round(float(rng.uniform(1.0, 6.0)), 3)
        lines.append(f"{t:.3f}\t{t + dur:.3f}\tParticipant\t{_sentence(rng, rate, cfg)}")
        t += dur + 0.5
    return "\n".join(lines) + "\n"


def _write_labels(path: Path, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["Participant_ID", "PHQ8_Binary", "PHQ8_Score", "Gender"])
        w.writerows(rows)


def generate(out_dir: str | Path, n_train: int = 107, n_dev: int = 35, train_pos: int = 30,
             dev_pos: int = 12, seed: int = 0, cfg: SynthConfig = SynthConfig()) -> dict[str, Path]:
    """Write transcripts plus ``train``/``dev`` label files under ``out_dir``.

    Returns the paths of the transcript directory and both label files.
    """
    if not 0 <= train_pos <= n_train or not 0 <= dev_pos <= n_dev:
        raise ValueError("positive counts must fit inside their splits")
    rng = np.random.default_rng(seed)
    out = Path(out_dir)
    tdir = out / "transcripts"
    tdir.mkdir(parents=True, exist_ok=True)
    paths = {"transcripts": tdir}
    next_id = 300
    for split, n, n_pos in (("train", n_train, train_pos), ("dev", n_dev, dev_pos)):
        y = np.zeros(n, dtype=int)
        y[rng.choice(n, size=n_pos, replace=False)] = 1
        rows = []
        for y_c in y:
            sid = next_id
            next_id += 1
            score = _score(rng, int(y_c))
            (tdir / f"{sid}_TRANSCRIPT.csv").write_text(session_transcript(rng, score, int(y_c), cfg), encoding="utf-8")
            rows.append([sid, int(y_c), score, int(rng.integers(0, 2))])
        label_path = out / f"{split}_split_Depression_AVEC2017.csv"
        _write_labels(label_path, rows)
        paths[split] = label_path
    return paths
