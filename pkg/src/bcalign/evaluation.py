"""Quantitative evaluation of the embedding space: top-k% retrieval accuracy,
triadic similarity agreement, context-backchannel matching, affective ridge
probes with lexical/prosodic baselines, and rating aggregation."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from importlib import resources
from typing import Iterable, Mapping, Sequence

import numpy as np

from .corpus import DEFAULT_LEXICON, BackchannelSample
from .errors import (
    CountMismatch,
    MissingFeature,
    MissingGroundTruth,
    SingularSystem,
    UnknownId,
    UnknownLexeme,
)
from .features import AFFECTIVE_DIMS

#: Full-scale reference results for this evaluation protocol, measured with
#: licensed conversational-telephone-speech corpora, a fine-tuned
#: billion-parameter text encoder, and a frozen pretrained speech encoder.
#: They are orientation targets only; the desk-scale synthetic pipeline
#: reproduces orderings and trends, not these absolute values.
REFERENCE_TARGETS = {
    "retrieval_top10pct": {"joint_model": 49.8, "random": 10.0},
    "triadic_pct": {
        "joint_model": {"prosodic_multi_speaker": 69.7, "prosodic_single_speaker": 75.9,
                        "cross_lexical": 66.3},
        "acoustic_baseline": {"prosodic_multi_speaker": 61.7, "prosodic_single_speaker": 70.8,
                              "cross_lexical": 56.6},
        "random": 33.3,
    },
    "matching_pct": {"joint_model_5_turns": 72.3, "joint_model_1_turn": 62.0,
                     "human_1_turn": 47.4, "random": 33.3},
    "probe_r2": {
        "joint_model": {"energy": 0.465, "polarity": 0.341, "surprisal": 0.552},
        "acoustic_baseline": {"energy": 0.406, "polarity": 0.287, "surprisal": 0.502},
        "lexical": {"energy": 0.193, "polarity": 0.204, "surprisal": 0.432},
        "prosody": {"energy": 0.118, "polarity": 0.028, "surprisal": 0.156},
        "lexical_prosody": {"energy": 0.240, "polarity": 0.237, "surprisal": 0.473},
    },
    "rating_pairwise_r2": {"energy-polarity": 0.45, "energy-surprisal": 0.39,
                           "surprisal-polarity": 0.09},
}


def _unit_rows(x: np.ndarray) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    return x / np.maximum(norms, 1e-30)


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    return float(a @ b / (na * nb))


# --- retrieval ---

def topk_percent_accuracy(
    ctx_embs: np.ndarray,
    bc_embs: np.ndarray,
    true_pairing: Sequence[int],
    k_percent: float,
) -> float:
    """Fraction of contexts whose true backchannel ranks within the top
    ceil(k% of the pool) by cosine; ties break by stable index order."""
    C = _unit_rows(ctx_embs)
    B = _unit_rows(bc_embs)
    if C.shape[0] != B.shape[0]:
        raise CountMismatch(f"{C.shape[0]} contexts vs {B.shape[0]} backchannels")
    if not 0 < k_percent <= 100:
        raise ValueError(f"k_percent must be in (0, 100], got {k_percent}")
    m = B.shape[0]
    cutoff = math.ceil(k_percent * m / 100.0)
    sims = C @ B.T
    hits = 0
    for i, j in enumerate(true_pairing):
        row = sims[i]
        s_true = row[j]
        rank = 1 + int(np.sum(row > s_true)) + int(np.sum(row[:j] == s_true))
        if rank <= cutoff:
            hits += 1
    return hits / m


# --- triadic similarity ---

_PAIR_ORDER = ((1, 2), (1, 3), (2, 3))


def triadic_select(e1: np.ndarray, e2: np.ndarray, e3: np.ndarray) -> tuple[int, int]:
    """Most similar pair of the three by cosine; ties keep the earliest of
    (1,2) < (1,3) < (2,3)."""
    embs = (e1, e2, e3)
    sims = [cosine(embs[p - 1], embs[q - 1]) for p, q in _PAIR_ORDER]
    return _PAIR_ORDER[int(np.argmax(sims))]


@dataclass(frozen=True)
class TriadJudgment:
    ids: tuple[str, str, str]
    consensus: tuple[int, int]
    agreement: float


def build_triad_judgments(records: Iterable[dict]) -> list[TriadJudgment]:
    """Consensus pick and agreement fraction per distinct triad in a ratings file."""
    picks: dict[tuple, list[tuple[int, int]]] = {}
    for rec in records:
        triad = rec.get("triad")
        if not triad:
            continue
        ids = tuple(triad["ids"])
        picks.setdefault(ids, []).append(tuple(triad["pick"]))
    judgments = []
    for ids, votes in picks.items():
        counts = {pair: votes.count(pair) for pair in _PAIR_ORDER}
        consensus = max(_PAIR_ORDER, key=lambda pair: counts[pair])
        judgments.append(TriadJudgment(ids, consensus, counts[consensus] / len(votes)))
    return judgments


def triadic_agreement(
    embeddings_by_id: Mapping[str, np.ndarray],
    triads: Sequence[TriadJudgment],
    min_agreement: float = 0.8,
) -> float:
    """Fraction of high-agreement triads where the embedding pick matches the
    human consensus; agreement exactly at the threshold is included."""
    eligible = [t for t in triads if t.agreement >= min_agreement]
    if not eligible:
        raise ValueError("no triads at or above the agreement threshold")
    correct = 0
    for t in eligible:
        try:
            embs = [embeddings_by_id[i] for i in t.ids]
        except KeyError as e:
            raise UnknownId(f"no embedding for id {e.args[0]!r}") from e
        if triadic_select(*embs) == t.consensus:
            correct += 1
    return correct / len(eligible)


# --- context-backchannel matching ---

@dataclass(frozen=True)
class MatchingSet:
    """One stimulus set: the anchor's context against candidate backchannels."""

    anchor_id: str
    candidate_ids: tuple[str, ...]
    truth_index: int
    rater_scores: tuple[dict, ...]  # one {candidate_id: score} per rater


def build_matching_sets(records: Iterable[dict]) -> list[MatchingSet]:
    grouped: dict[str, list[dict]] = {}
    order: dict[str, tuple[str, ...]] = {}
    for rec in records:
        scores = rec.get("match_scores")
        if not scores:
            continue
        anchor = rec["bc_id"]
        grouped.setdefault(anchor, []).append(dict(scores))
        order.setdefault(anchor, tuple(scores.keys()))
    sets = []
    for anchor, score_dicts in grouped.items():
        candidates = order[anchor]
        if anchor not in candidates:
            raise MissingGroundTruth(f"anchor {anchor!r} not among its candidates")
        sets.append(
            MatchingSet(anchor, candidates, candidates.index(anchor), tuple(score_dicts))
        )
    return sets


def matching_select(z_ctx: np.ndarray, candidates: Sequence[np.ndarray]) -> int:
    """Index of the candidate with the highest cosine to the context; ties
    break by lowest index."""
    sims = [cosine(z_ctx, c) for c in candidates]
    return int(np.argmax(sims))


def matching_accuracy(
    sets: Sequence[MatchingSet],
    ctx_embeddings: Mapping[str, np.ndarray],
    bc_embeddings: Mapping[str, np.ndarray],
) -> float:
    if not sets:
        raise ValueError("no matching stimulus sets")
    correct = 0
    for s in sets:
        try:
            z_ctx = ctx_embeddings[s.anchor_id]
            cands = [bc_embeddings[c] for c in s.candidate_ids]
        except KeyError as e:
            raise UnknownId(f"no embedding for id {e.args[0]!r}") from e
        if matching_select(z_ctx, cands) == s.truth_index:
            correct += 1
    return correct / len(sets)


def aggregate_match_scores(scores_by_rater: Sequence[Mapping[str, float]]) -> str:
    """The rater aggregation rule: average each candidate's scores and select
    the candidate with the highest mean; ties break by first appearance."""
    if not scores_by_rater:
        raise ValueError("no rater scores")
    candidates = list(scores_by_rater[0].keys())
    means = [
        float(np.mean([r[c] for r in scores_by_rater if c in r])) for c in candidates
    ]
    return candidates[int(np.argmax(means))]


def rater_matching_accuracy(sets: Sequence[MatchingSet]) -> float:
    if not sets:
        raise ValueError("no matching stimulus sets")
    correct = sum(
        1
        for s in sets
        if aggregate_match_scores(s.rater_scores) == s.candidate_ids[s.truth_index]
    )
    return correct / len(sets)


# --- ridge probes ---

@dataclass
class RidgeProbe:
    weights: np.ndarray
    bias: float
    alpha: float
    target: str = ""

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.atleast_2d(np.asarray(X, dtype=np.float64)) @ self.weights + self.bias


def fit_ridge(X: np.ndarray, y: np.ndarray, alpha: float = 1.0, target: str = "") -> RidgeProbe:
    """Closed-form ridge on mean-centered data; the bias is unpenalized."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64).ravel()
    if X.shape[0] < 2:
        raise ValueError("need at least 2 rows to fit a probe")
    if X.shape[0] != y.size:
        raise CountMismatch(f"{X.shape[0]} rows vs {y.size} targets")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValueError("non-finite values in probe inputs")
    x_mean = X.mean(axis=0)
    y_mean = float(y.mean())
    Xc = X - x_mean
    yc = y - y_mean
    gram = Xc.T @ Xc + alpha * np.eye(X.shape[1])
    try:
        w = np.linalg.solve(gram, Xc.T @ yc)
    except np.linalg.LinAlgError as e:
        raise SingularSystem(f"normal equations singular (alpha={alpha})") from e
    return RidgeProbe(w, y_mean - float(x_mean @ w), alpha, target)


def probe_r2(probe: RidgeProbe, X: np.ndarray, y: np.ndarray) -> float:
    """1 - SS_res/SS_tot; can go negative on held-out data."""
    y = np.asarray(y, dtype=np.float64).ravel()
    pred = probe.predict(X)
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0.0:
        return 1.0 if ss_res < 1e-24 else 0.0
    return 1.0 - ss_res / ss_tot


def lexical_onehot(lexeme: str, lexicon: Sequence[str] = DEFAULT_LEXICON) -> np.ndarray:
    vec = np.zeros(len(lexicon))
    try:
        vec[list(lexicon).index(lexeme)] = 1.0
    except ValueError:
        raise UnknownLexeme(f"{lexeme!r} not in the active lexicon") from None
    return vec


def baseline_features(sample: BackchannelSample) -> np.ndarray:
    """Prosodic baseline: [pitch range in semitones, duration in voiced frames]."""
    if sample.pitch_range_st is None or sample.duration_frames is None:
        raise MissingFeature(f"sample {sample.id} lacks prosodic fields")
    return np.array([sample.pitch_range_st, float(sample.duration_frames)])


def combined_baseline_features(
    sample: BackchannelSample, lexicon: Sequence[str] = DEFAULT_LEXICON
) -> np.ndarray:
    return np.concatenate([lexical_onehot(sample.lexeme, lexicon), baseline_features(sample)])


# --- affective ratings ---

class AffectiveRatings:
    """Per-backchannel rating lists with median/mean aggregation."""

    def __init__(self, ratings: dict[str, dict[str, list[int]]]):
        self.ratings = ratings

    @classmethod
    def from_records(cls, records: Iterable[dict]) -> "AffectiveRatings":
        ratings: dict[str, dict[str, list[int]]] = {}
        for rec in records:
            if not any(dim in rec for dim in AFFECTIVE_DIMS):
                continue
            slot = ratings.setdefault(rec["bc_id"], {d: [] for d in AFFECTIVE_DIMS})
            for dim in AFFECTIVE_DIMS:
                if dim in rec:
                    slot[dim].append(int(rec[dim]))
        return cls(ratings)

    def ids(self) -> list[str]:
        return list(self.ratings)

    def median(self, bc_id: str, dim: str) -> float:
        return float(np.median(self.ratings[bc_id][dim]))

    def mean(self, bc_id: str, dim: str) -> float:
        return float(np.mean(self.ratings[bc_id][dim]))

    def target_vector(self, ids: Sequence[str], dim: str, aggregate: str = "median") -> np.ndarray:
        agg = self.median if aggregate == "median" else self.mean
        return np.array([agg(i, dim) for i in ids])


@dataclass
class RatingStats:
    lexeme_stats: dict[str, dict[str, tuple[float, float]]]  # lexeme -> dim -> (mean, std)
    pairwise_r2: dict[str, float]
    medians: dict[str, dict[str, float]]  # dim -> bc_id -> median


def rating_stats(ratings: AffectiveRatings, lexeme_by_id: Mapping[str, str]) -> RatingStats:
    """Per-lexeme mean +/- std of per-backchannel medians (population std), and
    squared Pearson correlation between per-backchannel mean-rating vectors."""
    ids = ratings.ids()
    medians = {d: {i: ratings.median(i, d) for i in ids} for d in AFFECTIVE_DIMS}
    by_lexeme: dict[str, dict[str, list[float]]] = {}
    for i in ids:
        lex = lexeme_by_id[i]
        slot = by_lexeme.setdefault(lex, {d: [] for d in AFFECTIVE_DIMS})
        for d in AFFECTIVE_DIMS:
            slot[d].append(medians[d][i])
    lexeme_stats = {
        lex: {d: (float(np.mean(vals[d])), float(np.std(vals[d]))) for d in AFFECTIVE_DIMS}
        for lex, vals in by_lexeme.items()
    }
    means = {d: np.array([ratings.mean(i, d) for i in ids]) for d in AFFECTIVE_DIMS}
    pairwise = {}
    for a_i in range(len(AFFECTIVE_DIMS)):
        for b_i in range(a_i + 1, len(AFFECTIVE_DIMS)):
            a, b = AFFECTIVE_DIMS[a_i], AFFECTIVE_DIMS[b_i]
            va, vb = means[a], means[b]
            if np.std(va) == 0 or np.std(vb) == 0:
                r2 = 1.0 if np.array_equal(va, vb) else 0.0
            else:
                r2 = float(np.corrcoef(va, vb)[0, 1] ** 2)
            pairwise[f"{a}-{b}"] = r2
    return RatingStats(lexeme_stats, pairwise, medians)


def load_reference_rating_stats() -> dict:
    """Shipped per-lexeme affective rating statistics from the full-scale
    perception study (mean +/- std of per-backchannel medians)."""
    with resources.files("bcalign.data").joinpath("lexeme_rating_stats.json").open() as fh:
        return json.load(fh)


PROBES_FORMAT = "bc-probes/1"


def save_probes(probes: Mapping[str, RidgeProbe], path, trained_on: str = "joint_model") -> None:
    doc = {
        "format": PROBES_FORMAT,
        "trained_on": trained_on,
        "dims": {
            dim: {"weights": p.weights.tolist(), "bias": p.bias, "alpha": p.alpha}
            for dim, p in probes.items()
        },
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)


def load_probes(path) -> dict[str, RidgeProbe]:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format") != PROBES_FORMAT:
        raise ValueError(f"{path}: expected probes format {PROBES_FORMAT!r}")
    return {
        dim: RidgeProbe(np.array(d["weights"]), float(d["bias"]), float(d["alpha"]), dim)
        for dim, d in doc["dims"].items()
    }


# --- probe protocol ---

@dataclass
class ProbeReport:
    r2: dict[str, dict[str, float]]            # feature set -> dim -> test R^2
    probes: dict[str, dict[str, RidgeProbe]]   # feature set -> dim -> fitted probe
    train_ids: list[str]
    test_ids: list[str]


def probe_report(
    ids: Sequence[str],
    targets_by_dim: Mapping[str, np.ndarray],
    feature_sets: Mapping[str, np.ndarray],
    alpha: float = 1.0,
    seed: int = 0,
    train_fraction: float = 0.5,
) -> ProbeReport:
    """Random half split, one ridge probe per (feature set, dimension), test R^2."""
    n = len(ids)
    if n < 4:
        raise ValueError("need at least 4 rated samples for a probe split")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    n_train = max(2, int(round(train_fraction * n)))
    n_train = min(n_train, n - 2)
    train_idx, test_idx = perm[:n_train], perm[n_train:]

    r2: dict[str, dict[str, float]] = {}
    probes: dict[str, dict[str, RidgeProbe]] = {}
    for name, X in feature_sets.items():
        X = np.asarray(X, dtype=np.float64)
        if X.shape[0] != n:
            raise CountMismatch(f"feature set {name!r} has {X.shape[0]} rows for {n} ids")
        r2[name] = {}
        probes[name] = {}
        for dim, y in targets_by_dim.items():
            probe = fit_ridge(X[train_idx], np.asarray(y)[train_idx], alpha, target=dim)
            r2[name][dim] = probe_r2(probe, X[test_idx], np.asarray(y)[test_idx])
            probes[name][dim] = probe
    return ProbeReport(
        r2, probes, [ids[i] for i in train_idx], [ids[i] for i in test_idx]
    )
