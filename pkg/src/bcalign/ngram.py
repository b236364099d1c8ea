"""Backoff n-gram language model over formatted transcripts, used to run the
perplexity-versus-context-length protocol on backchannel tokens at desk scale.

Witten-Bell interpolation recursively mixes maximum-likelihood estimates with
shorter contexts, bottoming out in a uniform floor over the vocabulary plus an
unknown-word slot, so every probability is positive and each context's
distribution sums to one.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .corpus import (
    DEFAULT_LEXICON,
    BackchannelSample,
    Transcript,
    Turn,
    build_context,
    format_transcript,
)
from .errors import EmptyCorpus, NoSamples

UNK = "<unk>"


@dataclass
class NGramLM:
    order: int
    vocabulary: frozenset[str]
    # counts[k][(ctx tuple of length k, word)] and context totals/type counts
    counts: list[dict] = field(repr=False, default_factory=list)
    totals: list[dict] = field(repr=False, default_factory=list)
    types: list[dict] = field(repr=False, default_factory=list)
    uniform: bool = False

    @property
    def unk_prob(self) -> float:
        """Uniform smoothing floor reached when every context backs off."""
        return 1.0 / (len(self.vocabulary) + (0 if self.uniform else 1))

    def prob(self, context: Sequence[str], token: str) -> float:
        if self.uniform:
            return 1.0 / len(self.vocabulary)
        w = token if token in self.vocabulary else UNK
        k = min(self.order - 1, len(context))
        ctx = tuple(context[len(context) - k :])
        return self._prob_k(ctx, w)

    def _prob_k(self, ctx: tuple, w: str) -> float:
        if len(ctx) == 0:
            total = self.totals[0][()]
            n_types = self.types[0][()]
            lam = total / (total + n_types)
            ml = self.counts[0].get(((), w), 0) / total
            return lam * ml + (1.0 - lam) * self.unk_prob
        k = len(ctx)
        total = self.totals[k].get(ctx, 0)
        if total == 0:
            return self._prob_k(ctx[1:], w)
        n_types = self.types[k][ctx]
        lam = total / (total + n_types)
        ml = self.counts[k].get((ctx, w), 0) / total
        return lam * ml + (1.0 - lam) * self._prob_k(ctx[1:], w)


def train_lm(token_streams: Iterable[Sequence[str]], order: int = 3) -> NGramLM:
    """Count 1..order-grams per stream and return the interpolated model."""
    if order < 1:
        raise ValueError(f"order must be >= 1, got {order}")
    streams = [list(s) for s in token_streams]
    streams = [s for s in streams if s]
    if not streams:
        raise EmptyCorpus("no non-empty token stream provided")

    counts = [defaultdict(int) for _ in range(order)]
    totals = [defaultdict(int) for _ in range(order)]
    vocab = set()
    for stream in streams:
        vocab.update(stream)
        for i, w in enumerate(stream):
            for k in range(min(order - 1, i) + 1):
                ctx = tuple(stream[i - k : i])
                counts[k][(ctx, w)] += 1
                totals[k][ctx] += 1
    types = [defaultdict(int) for _ in range(order)]
    for k in range(order):
        for (ctx, _w) in counts[k]:
            types[k][ctx] += 1
    return NGramLM(
        order=order,
        vocabulary=frozenset(vocab),
        counts=[dict(c) for c in counts],
        totals=[dict(t) for t in totals],
        types=[dict(t) for t in types],
    )


def uniform_lm(vocabulary: Iterable[str]) -> NGramLM:
    """Untrained baseline that assigns 1/v to every vocabulary token."""
    vocab = frozenset(vocabulary)
    if not vocab:
        raise EmptyCorpus("uniform LM needs a vocabulary")
    return NGramLM(order=1, vocabulary=vocab, uniform=True)


def token_logprob(lm: NGramLM, context_tokens: Sequence[str], token: str) -> float:
    """Natural-log probability of ``token`` after ``context_tokens``."""
    return math.log(lm.prob(context_tokens, token))


def backchannel_perplexity(
    lm: NGramLM,
    samples: Sequence[BackchannelSample],
    k_turns: int | None = None,
    mean: str = "geometric",
) -> float:
    """Perplexity of backchannel words given their built contexts.

    ``geometric`` is exp(mean negative log-likelihood); ``arithmetic``
    averages the per-sample perplexities instead.
    """
    sampled = [s for s in samples if s.context_text is not None]
    if k_turns is not None:
        sampled = [s for s in sampled if s.context_turns == k_turns]
    if not sampled:
        raise NoSamples(f"no samples with contexts at k={k_turns}")
    logps = [token_logprob(lm, s.context_text.split(), s.lexeme) for s in sampled]
    if mean == "geometric":
        return float(math.exp(-np.mean(logps)))
    if mean == "arithmetic":
        return float(np.mean([math.exp(-lp) for lp in logps]))
    raise ValueError(f"unknown mean {mean!r}")


# --- synthetic long-dependency corpus ---

_FAR_CUES = ("alpha", "bravo", "charlie", "delta")
_NEAR_CUES = ("north", "south", "east", "west")


def make_dependency_corpus(
    n_dialogues: int = 100,
    blocks_per_dialogue: int = 8,
    seed: int = 0,
    lexicon: Sequence[str] = DEFAULT_LEXICON,
) -> list[Transcript]:
    """Corpus where the backchannel lexeme is a deterministic function of one
    cue word three turns back and another five turns back.

    Each six-turn block is [far-cue, empty, near-cue, empty, empty,
    backchannel], so a 1-turn context sees neither cue, a 3-turn context sees
    only the near cue, and a 5-turn context sees both. Any model restricted
    to 1 turn of context therefore cannot beat chance over the cue table.
    """
    if len(lexicon) < len(_FAR_CUES) * len(_NEAR_CUES):
        raise ValueError("lexicon too small for the cue table")
    rng = np.random.default_rng(seed)
    transcripts = []
    for d in range(n_dialogues):
        turns: list[Turn] = []
        speaker = "A"

        def add(tokens: tuple[str, ...] = ()):
            nonlocal speaker
            turns.append(Turn(speaker, tokens))
            speaker = "B" if speaker == "A" else "A"

        for _ in range(blocks_per_dialogue):
            i_far = int(rng.integers(len(_FAR_CUES)))
            i_near = int(rng.integers(len(_NEAR_CUES)))
            lexeme = lexicon[i_near * len(_FAR_CUES) + i_far]
            add((_FAR_CUES[i_far],))
            add()
            add((_NEAR_CUES[i_near],))
            add()
            add()
            add((lexeme,))
        transcripts.append(Transcript(tuple(turns), f"dep-{d:04d}"))
    return transcripts


#: n-gram order whose window spans a full 5-turn context of the corpus above
DEPENDENCY_CORPUS_ORDER = 14


def context_length_protocol(
    transcripts: Sequence[Transcript],
    samples: Sequence[BackchannelSample],
    ks: Sequence[int] = (1, 3, 5),
    order: int = 3,
    mean: str = "geometric",
) -> dict:
    """Train on the train-split transcripts, then measure backchannel
    perplexity on the test-split samples at each context length in ``ks``.
    An untrained uniform baseline is reported alongside.
    """
    by_id = {t.source_id: t for t in transcripts}
    split_of = {s.dialogue_id: s.split for s in samples if s.split}
    train_streams = [
        format_transcript(t).split()
        for t in transcripts
        if split_of.get(t.source_id) == "train"
    ]
    lm = train_lm(train_streams, order=order)
    baseline = uniform_lm(lm.vocabulary)

    test_samples = [s for s in samples if s.split == "test"]
    if not test_samples:
        raise NoSamples("no test-split samples")
    result: dict = {
        "order": order,
        "mean": mean,
        "turns": list(ks),
        "n_test_samples": len(test_samples),
        "perplexity": {},
        "uniform_baseline": {},
    }
    for k in ks:
        built = []
        for s in test_samples:
            t = by_id[s.dialogue_id]
            built.append(
                BackchannelSample(
                    id=s.id, dialogue_id=s.dialogue_id, speaker=s.speaker,
                    lexeme=s.lexeme, turn_index=s.turn_index,
                    context_text=build_context(t, s, k), context_turns=k,
                )
            )
        result["perplexity"][k] = backchannel_perplexity(lm, built, k, mean=mean)
        result["uniform_baseline"][k] = backchannel_perplexity(baseline, built, k, mean=mean)
    return result
