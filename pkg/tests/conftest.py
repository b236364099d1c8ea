import pathlib
import string

import numpy as np
import pytest

from bcalign.corpus import OverlapKind, OverlapSpan, Transcript, Turn

DATA_DIR = pathlib.Path(__file__).parent / "data"

_WORDS = [
    "yeah", "right", "mhm", "so", "the", "um", "uh", "i", "think", "that's",
    "well", "money", "uh-huh", "topic", "know", "people", "really", "okay",
]


def make_random_transcript(rng: np.random.Generator, source_id: str = "gen") -> Transcript:
    """Random valid transcript: alternating speakers, optional paired overlaps."""
    n_turns = int(rng.integers(1, 9))
    first = "A" if rng.random() < 0.5 else "B"
    token_lists = []
    for _ in range(n_turns):
        n_tok = int(rng.integers(0, 7))
        token_lists.append([str(rng.choice(_WORDS)) for _ in range(n_tok)])

    carries = [False] * n_turns
    receives = [False] * n_turns
    for i in range(n_turns - 1):
        if token_lists[i] and rng.random() < 0.35:
            carries[i] = True
            receives[i + 1] = True
    # unmatched overlap is legal at the transcript boundaries only
    if token_lists[-1] and rng.random() < 0.15:
        carries[-1] = True
    if rng.random() < 0.15:
        receives[0] = True

    turns = []
    speaker = first
    for i in range(n_turns):
        tokens = token_lists[i]
        spans = []
        if receives[i]:
            take = int(rng.integers(1, len(tokens) + 1)) if tokens else 0
            spans.append(OverlapSpan(0, take, OverlapKind.RECEIVE))
        if carries[i]:
            lo = spans[0].end if spans else 0
            width = int(rng.integers(1, max(2, len(tokens) - lo + 1)))
            start = max(lo, len(tokens) - width)
            spans.append(OverlapSpan(start, len(tokens), OverlapKind.CARRY))
        turns.append(Turn(speaker, tuple(tokens), tuple(spans)))
        speaker = "B" if speaker == "A" else "A"
    return Transcript(tuple(turns), source_id)


@pytest.fixture(scope="session")
def dialogue_a_text() -> str:
    return (DATA_DIR / "dialogue_scandals_a.txt").read_text()


@pytest.fixture(scope="session")
def dialogue_b_text() -> str:
    return (DATA_DIR / "dialogue_scandals_b.txt").read_text()


def random_words(rng: np.random.Generator, n: int) -> list[str]:
    letters = list(string.ascii_lowercase)
    return ["".join(rng.choice(letters, size=int(rng.integers(1, 7)))) for _ in range(n)]
