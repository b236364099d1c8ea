"""Dialogue transcript notation: parsing, serialization, backchannel extraction,
context building, and leakage-free dataset splits.

The notation is whitespace-tokenized. ``<A>`` / ``<B>`` open a speaker turn,
``/`` closes it, ``{ ... }`` marks the tail of a turn that overlaps the next
turn (a *carry*), and ``[ ... ]`` marks the head of a turn that overlaps the
previous one (a *receive*). Markers are ordinary whitespace-delimited tokens.
"""

from __future__ import annotations

import enum
import json
import warnings
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    InsufficientDialogues,
    MalformedMarker,
    NonAlternatingSpeakers,
    UnbalancedOverlap,
)

#: Backchannel lexicon, ordered; index order is the one-hot encoding order.
DEFAULT_LEXICON: tuple[str, ...] = (
    "absolutely", "ah", "cool", "definitely", "exactly", "good",
    "mhm", "mm", "oh", "okay", "really", "right",
    "sure", "uh-huh", "wow", "yeah", "yep", "yes",
)

SPEAKER_TOKENS = {"<A>": "A", "<B>": "B"}
TURN_SHIFT = "/"

MANIFEST_SCHEMA = "bc-sample/1"


class OverlapKind(enum.Enum):
    CARRY = "carry"      # brace-delimited tail, overlaps the next turn
    RECEIVE = "receive"  # bracket-delimited head, overlaps the previous turn


@dataclass(frozen=True)
class OverlapSpan:
    """Half-open token index range [start, end) inside a turn."""

    start: int
    end: int
    kind: OverlapKind

    def __post_init__(self):
        if self.start < 0 or self.end < self.start:
            raise MalformedMarker(f"invalid overlap span ({self.start}, {self.end})")


@dataclass(frozen=True)
class Turn:
    """One speaker turn: word tokens plus at most one carry and one receive span."""

    speaker: str
    tokens: tuple[str, ...]
    overlap_spans: tuple[OverlapSpan, ...] = ()

    def __post_init__(self):
        if self.speaker not in ("A", "B"):
            raise MalformedMarker(f"unknown speaker {self.speaker!r}")
        carries = [s for s in self.overlap_spans if s.kind is OverlapKind.CARRY]
        receives = [s for s in self.overlap_spans if s.kind is OverlapKind.RECEIVE]
        if len(carries) > 1 or len(receives) > 1:
            raise MalformedMarker("at most one carry and one receive span per turn")
        for span in self.overlap_spans:
            if span.end > len(self.tokens):
                raise MalformedMarker("overlap span exceeds token bounds")
        if carries and carries[0].end != len(self.tokens):
            raise MalformedMarker("carry span must sit at the end of its turn")
        if receives and receives[0].start != 0:
            raise MalformedMarker("receive span must sit at the start of its turn")
        if carries and receives and receives[0].end > carries[0].start:
            raise MalformedMarker("carry and receive spans overlap")

    @property
    def carry(self) -> OverlapSpan | None:
        for s in self.overlap_spans:
            if s.kind is OverlapKind.CARRY:
                return s
        return None

    @property
    def receive(self) -> OverlapSpan | None:
        for s in self.overlap_spans:
            if s.kind is OverlapKind.RECEIVE:
                return s
        return None


@dataclass(frozen=True)
class Transcript:
    turns: tuple[Turn, ...]
    source_id: str = ""

    def __post_init__(self):
        for prev, cur in zip(self.turns, self.turns[1:]):
            if prev.speaker == cur.speaker:
                raise NonAlternatingSpeakers(
                    f"consecutive turns by speaker {cur.speaker} in {self.source_id!r}"
                )
        # Every carry pairs with a receive in the next turn and vice versa;
        # unmatched overlap is legal only at the transcript boundaries.
        for i, turn in enumerate(self.turns):
            if turn.carry is not None and i + 1 < len(self.turns):
                if self.turns[i + 1].receive is None:
                    raise UnbalancedOverlap(f"carry in turn {i} has no receive in turn {i + 1}")
            if turn.receive is not None and i > 0:
                if self.turns[i - 1].carry is None:
                    raise UnbalancedOverlap(f"receive in turn {i} has no carry in turn {i - 1}")


@dataclass
class BackchannelSample:
    """One backchannel occurrence with (optionally) its context, split, and prosody."""

    id: str
    dialogue_id: str
    speaker: str
    lexeme: str
    turn_index: int
    context_text: str | None = None
    context_turns: int | None = None
    bc_onset_s: float | None = None
    bc_offset_s: float | None = None
    split: str | None = None
    pitch_range_st: float | None = None
    duration_frames: int | None = None
    audio_ref: str | None = None


def normalize_transcript_text(text: str) -> str:
    """Whitespace-collapse and lowercase word tokens; markers pass through.

    This is the normal form that ``format_transcript(parse_transcript(s))``
    reproduces. A missing final turn shift is appended.
    """
    tokens = text.split()
    out = []
    for tok in tokens:
        if tok in SPEAKER_TOKENS or tok in (TURN_SHIFT, "{", "}", "[", "]"):
            out.append(tok)
        else:
            out.append(tok.lower())
    if out and out[-1] != TURN_SHIFT:
        out.append(TURN_SHIFT)
    return " ".join(out)


def parse_transcript(text: str, source_id: str = "") -> Transcript:
    """Parse notation text into a validated :class:`Transcript`.

    Raises :class:`MalformedMarker`, :class:`UnbalancedOverlap`, or
    :class:`NonAlternatingSpeakers`. A missing final ``/`` is tolerated
    with a warning.
    """
    tokens = text.split()
    if not tokens:
        raise MalformedMarker("empty input: transcript must begin with <A> or <B>")
    if tokens[0] not in SPEAKER_TOKENS:
        raise MalformedMarker(f"transcript must begin with <A> or <B>, got {tokens[0]!r}")

    turns: list[Turn] = []
    speaker: str | None = None
    words: list[str] = []
    spans: list[OverlapSpan] = []
    brace_start: int | None = None  # open { position
    bracket_start: int | None = None  # open [ position
    expect_speaker = True

    def close_turn():
        nonlocal speaker, words, spans, brace_start, bracket_start
        if brace_start is not None:
            raise UnbalancedOverlap("turn ended with an unclosed '{'")
        if bracket_start is not None:
            raise UnbalancedOverlap("turn ended with an unclosed '['")
        assert speaker is not None
        turns.append(Turn(speaker, tuple(words), tuple(spans)))
        speaker, words, spans = None, [], []

    for tok in tokens:
        if expect_speaker:
            if tok not in SPEAKER_TOKENS:
                raise MalformedMarker(f"expected a speaker token after a turn shift, got {tok!r}")
            speaker = SPEAKER_TOKENS[tok]
            expect_speaker = False
            continue
        if tok in SPEAKER_TOKENS:
            raise MalformedMarker(f"speaker token {tok!r} mid-turn without a preceding '/'")
        if tok == TURN_SHIFT:
            close_turn()
            expect_speaker = True
            continue
        if tok == "{":
            if brace_start is not None or bracket_start is not None:
                raise MalformedMarker("nested overlap markers")
            if any(s.kind is OverlapKind.CARRY for s in spans):
                raise MalformedMarker("more than one '{ }' span in a turn")
            brace_start = len(words)
            continue
        if tok == "}":
            if brace_start is None:
                raise UnbalancedOverlap("'}' without a matching '{'")
            spans.append(OverlapSpan(brace_start, len(words), OverlapKind.CARRY))
            brace_start = None
            continue
        if tok == "[":
            if bracket_start is not None or brace_start is not None:
                raise MalformedMarker("nested overlap markers")
            if words or any(s.kind is OverlapKind.RECEIVE for s in spans):
                raise MalformedMarker("'[' is only valid at the start of a turn")
            bracket_start = len(words)
            continue
        if tok == "]":
            if bracket_start is None:
                raise UnbalancedOverlap("']' without a matching '['")
            spans.append(OverlapSpan(bracket_start, len(words), OverlapKind.RECEIVE))
            bracket_start = None
            continue
        if any(s.kind is OverlapKind.CARRY for s in spans):
            # words after a closed carry would detach it from the turn end
            raise MalformedMarker("tokens after a closed '{ }' span")
        words.append(tok.lower())

    if not expect_speaker or speaker is not None:
        warnings.warn(f"transcript {source_id!r} missing final '/'; closing last turn")
        close_turn()
    return Transcript(tuple(turns), source_id)


def _turn_pieces(turn: Turn) -> list[str]:
    carry, receive = turn.carry, turn.receive
    pieces = [f"<{turn.speaker}>"]
    if receive is not None:
        pieces.append("[")
    for idx, word in enumerate(turn.tokens):
        if receive is not None and receive.end == idx:
            pieces.append("]")
        if carry is not None and carry.start == idx:
            pieces.append("{")
        pieces.append(word)
    if receive is not None and receive.end == len(turn.tokens):
        pieces.append("]")
    if carry is not None and carry.start == len(turn.tokens):
        pieces.append("{")
    if carry is not None:
        pieces.append("}")
    return pieces


def format_transcript(t: Transcript) -> str:
    """Serialize back to notation text; inverse of :func:`parse_transcript`."""
    pieces: list[str] = []
    for turn in t.turns:
        pieces.extend(_turn_pieces(turn))
        pieces.append(TURN_SHIFT)
    return " ".join(pieces)


def extract_backchannels(
    t: Transcript, lexicon: Iterable[str] = DEFAULT_LEXICON
) -> list[BackchannelSample]:
    """Find turns that consist of exactly one lexicon word, occurring once.

    Overlap markers are ignored for the content test, so ``[ mhm ]`` counts.
    Multi-word turns such as ``right right`` are excluded.
    """
    lex = set(lexicon)
    samples = []
    for idx, turn in enumerate(t.turns):
        if len(turn.tokens) == 1 and turn.tokens[0] in lex:
            samples.append(
                BackchannelSample(
                    id=f"{t.source_id}:{idx}",
                    dialogue_id=t.source_id,
                    speaker=turn.speaker,
                    lexeme=turn.tokens[0],
                    turn_index=idx,
                )
            )
    return samples


def build_context(t: Transcript, sample: BackchannelSample, k_turns: int) -> str:
    """Context string for a backchannel: up to ``k_turns`` preceding turns in
    notation, then ``/``, the current speaker token, and any opening bracket
    preceding the backchannel word. The backchannel word itself is excluded.
    """
    if k_turns < 1:
        raise ValueError("k_turns must be >= 1")
    idx = sample.turn_index
    if not 0 <= idx < len(t.turns):
        raise IndexError(f"turn_index {idx} outside transcript {t.source_id!r}")
    start = max(0, idx - k_turns)
    pieces: list[str] = []
    for turn in t.turns[start:idx]:
        pieces.extend(_turn_pieces(turn))
        pieces.append(TURN_SHIFT)
    bc_turn = t.turns[idx]
    pieces.append(f"<{bc_turn.speaker}>")
    receive = bc_turn.receive
    if receive is not None and receive.start == 0:
        pieces.append("[")
    return " ".join(pieces)


def split_dataset(
    dialogue_ids: Iterable[str],
    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1),
    seed: int = 0,
) -> dict[str, str]:
    """Assign each dialogue to train/val/test, deterministically per seed.

    Counts follow the largest-remainder rule, so realized proportions sit
    within one dialogue of the targets; every split with a positive ratio
    receives at least one dialogue.
    """
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must sum to 1, got {ratios}")
    if any(r < 0 for r in ratios):
        raise ValueError(f"ratios must be non-negative, got {ratios}")
    ids = sorted(set(dialogue_ids))
    n = len(ids)
    if n < 3:
        raise InsufficientDialogues(f"need at least 3 dialogues, got {n}")

    counts = [int(np.floor(r * n)) for r in ratios]
    remainders = [r * n - c for r, c in zip(ratios, counts)]
    for _ in range(n - sum(counts)):
        i = int(np.argmax(remainders))
        counts[i] += 1
        remainders[i] = -1.0
    for i, r in enumerate(ratios):
        while r > 0 and counts[i] == 0:
            donor = int(np.argmax(counts))
            counts[donor] -= 1
            counts[i] += 1

    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    assignment: dict[str, str] = {}
    cursor = 0
    for label, count in zip(("train", "val", "test"), counts):
        for j in order[cursor : cursor + count]:
            assignment[ids[j]] = label
        cursor += count
    return assignment


def assign_splits(
    samples: Sequence[BackchannelSample],
    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1),
    seed: int = 0,
) -> dict[str, str]:
    """Split by dialogue_id and stamp each sample in place; returns the assignment."""
    assignment = split_dataset((s.dialogue_id for s in samples), ratios, seed)
    for s in samples:
        s.split = assignment[s.dialogue_id]
    return assignment


# --- manifest I/O ---

_MANIFEST_FIELDS = (
    "id", "dialogue_id", "speaker", "lexeme", "turn_index", "context_text",
    "context_turns", "bc_onset_s", "bc_offset_s", "split",
    "pitch_range_st", "duration_frames", "audio_ref",
)


def write_manifest(samples: Iterable[BackchannelSample], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"schema": MANIFEST_SCHEMA}) + "\n")
        for s in samples:
            record = {k: getattr(s, k) for k in _MANIFEST_FIELDS}
            record = {k: v for k, v in record.items() if v is not None}
            fh.write(json.dumps(record) + "\n")


def read_manifest(path) -> list[BackchannelSample]:
    samples = []
    with open(path, encoding="utf-8") as fh:
        header = json.loads(fh.readline())
        if header.get("schema") != MANIFEST_SCHEMA:
            raise ValueError(f"unexpected manifest schema: {header.get('schema')!r}")
        for line in fh:
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            samples.append(BackchannelSample(**record))
    return samples
