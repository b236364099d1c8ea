"""Feature carriage and synthesis.

Externally produced frozen-encoder vectors arrive as JSON Lines, one record
per (id, kind); kinds are ``ctx_text``, ``ctx_audio``, and ``bc_audio``. The
synthetic generator plants a shared latent behind all three kinds plus the
affective labels, so alignment is learnable by construction at any noise
level and desk-scale tests have ground truth to check against.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .corpus import DEFAULT_LEXICON, BackchannelSample
from .errors import (
    BadSchema,
    DimensionMismatch,
    DuplicateId,
    InvalidConfig,
    NonFiniteValue,
)

KINDS = ("ctx_text", "ctx_audio", "bc_audio")

RATINGS_SCHEMA = "bc-ratings/1"
AFFECTIVE_DIMS = ("energy", "polarity", "surprisal")


@dataclass
class FeatureStore:
    """Immutable-after-load id->vector maps, one per feature kind."""

    vectors: dict[str, dict[str, np.ndarray]] = field(
        default_factory=lambda: {k: {} for k in KINDS}
    )
    dims: dict[str, int] = field(default_factory=dict)

    def add(self, kind: str, id_: str, values: np.ndarray) -> None:
        if kind not in KINDS:
            raise BadSchema(f"unknown feature kind {kind!r}")
        vec = np.asarray(values, dtype=np.float64)
        if vec.ndim != 1:
            raise DimensionMismatch(f"{id_}: vector must be 1-D")
        if not np.all(np.isfinite(vec)):
            raise NonFiniteValue(f"{id_}: non-finite value in {kind}")
        if kind in self.dims and self.dims[kind] != vec.size:
            raise DimensionMismatch(
                f"{id_}: {kind} dim {vec.size} != established {self.dims[kind]}"
            )
        if id_ in self.vectors[kind]:
            raise DuplicateId(f"duplicate id {id_!r} for kind {kind}")
        self.dims.setdefault(kind, vec.size)
        self.vectors[kind][id_] = vec

    def get(self, kind: str, id_: str) -> np.ndarray:
        return self.vectors[kind][id_]

    def has(self, kind: str, id_: str) -> bool:
        return id_ in self.vectors[kind]

    def ids(self, kind: str) -> list[str]:
        return list(self.vectors[kind])

    def matrix(self, kind: str, ids: Sequence[str]) -> np.ndarray:
        missing = [i for i in ids if i not in self.vectors[kind]]
        if missing:
            raise KeyError(f"{len(missing)} ids missing for kind {kind}: {missing[:3]}...")
        return np.stack([self.vectors[kind][i] for i in ids])

    def __len__(self) -> int:
        return sum(len(v) for v in self.vectors.values())


def write_vectors(store: FeatureStore, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for kind in KINDS:
            for id_, vec in store.vectors[kind].items():
                record = {
                    "id": id_,
                    "kind": kind,
                    "dim": int(vec.size),
                    "values": vec.tolist(),
                }
                fh.write(json.dumps(record) + "\n")


def read_vectors(path) -> FeatureStore:
    """Streaming JSONL reader; memory stays proportional to one record plus the store."""
    store = FeatureStore()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as e:
                raise BadSchema(f"{path}:{lineno}: invalid JSON: {e}") from e
            if not isinstance(record, dict):
                raise BadSchema(f"{path}:{lineno}: record must be an object")
            missing = {"id", "kind", "dim", "values"} - record.keys()
            if missing:
                raise BadSchema(f"{path}:{lineno}: missing fields {sorted(missing)}")
            values = record["values"]
            if not isinstance(values, list):
                raise BadSchema(f"{path}:{lineno}: values must be a list")
            if len(values) != record["dim"]:
                raise DimensionMismatch(
                    f"{path}:{lineno}: dim {record['dim']} but {len(values)} values"
                )
            store.add(record["kind"], record["id"], np.array(values, dtype=np.float64))
    return store


@dataclass(frozen=True)
class SynthConfig:
    n_pairs: int = 2000
    latent_dim: int = 8
    dim_text: int = 32
    dim_audio: int = 24
    noise_sigma: float = 0.1
    seed: int = 0
    pairs_per_dialogue: int = 20
    raters: int = 3

    def validate(self) -> None:
        if self.n_pairs < 1:
            raise InvalidConfig("n_pairs must be >= 1")
        if self.latent_dim > min(self.dim_text, self.dim_audio):
            raise InvalidConfig("latent_dim must not exceed the smallest feature dim")
        if self.noise_sigma < 0:
            raise InvalidConfig("noise_sigma must be >= 0")
        if self.pairs_per_dialogue < 1 or self.raters < 1:
            raise InvalidConfig("pairs_per_dialogue and raters must be >= 1")


def _orthonormal_columns(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    q, _ = np.linalg.qr(rng.normal(size=(rows, cols)))
    return q[:, :cols]


def generate_synthetic(
    cfg: SynthConfig,
) -> tuple[list[BackchannelSample], FeatureStore, list[dict], np.ndarray]:
    """Synthesize aligned features, manifest samples, and affective ratings.

    Per pair, a latent u ~ N(0, I) is pushed through fixed orthonormal-column
    maps into each feature kind, plus isotropic noise. Affective scores are
    fixed linear functionals of u clipped to [1, 5]; integer ratings add
    small per-rater noise. Lexemes follow the argmax of a fixed projection of
    u, and the two prosodic fields derive from single latent coordinates so a
    two-feature baseline is informative but strictly weaker than the full
    latent. Returns (samples, store, rating_records, latents).
    """
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    m = cfg.latent_dim

    map_text = _orthonormal_columns(rng, cfg.dim_text, m)
    map_audio = _orthonormal_columns(rng, cfg.dim_audio, m)
    map_bc = _orthonormal_columns(rng, cfg.dim_audio, m)
    lexeme_proj = rng.normal(size=(len(DEFAULT_LEXICON), m))
    # one linear functional per affective dimension, scaled to roughly 3 +/- 1
    affective_w = rng.normal(size=(len(AFFECTIVE_DIMS), m))
    affective_w /= np.linalg.norm(affective_w, axis=1, keepdims=True)

    latents = rng.normal(size=(cfg.n_pairs, m))
    store = FeatureStore()
    samples: list[BackchannelSample] = []
    ratings: list[dict] = []

    for i in range(cfg.n_pairs):
        u = latents[i]
        sid = f"synth:{i:05d}"
        noise = lambda d: rng.normal(0.0, cfg.noise_sigma, size=d) if cfg.noise_sigma > 0 else 0.0
        store.add("ctx_text", sid, map_text @ u + noise(cfg.dim_text))
        store.add("ctx_audio", sid, map_audio @ u + noise(cfg.dim_audio))
        store.add("bc_audio", sid, map_bc @ u + noise(cfg.dim_audio))

        dlg = f"synthdlg-{i // cfg.pairs_per_dialogue:04d}"
        pos = i % cfg.pairs_per_dialogue
        lexeme = DEFAULT_LEXICON[int(np.argmax(lexeme_proj @ u))]
        speaker = "B" if pos % 2 == 0 else "A"
        other = "A" if speaker == "B" else "B"
        samples.append(
            BackchannelSample(
                id=sid,
                dialogue_id=dlg,
                speaker=speaker,
                lexeme=lexeme,
                turn_index=2 * pos + 1,
                context_text=f"<{other}> synthetic turn {pos} / <{speaker}>",
                context_turns=1,
                pitch_range_st=float(np.clip(3.0 + 1.2 * u[0] + rng.normal(0, 0.4), 0.0, 12.0)),
                duration_frames=int(np.clip(round(30 + 8 * u[1] + rng.normal(0, 3)), 1, 120)),
            )
        )

        scores = np.clip(3.0 + affective_w @ u, 1.0, 5.0)
        for r in range(cfg.raters):
            record = {"bc_id": sid, "rater_id": f"rater-{r}"}
            for d, dim in enumerate(AFFECTIVE_DIMS):
                noisy = scores[d] + rng.normal(0.0, 0.3)
                record[dim] = int(np.clip(round(noisy), 1, 5))
            ratings.append(record)

    _attach_judgment_tasks(cfg, rng, latents, samples, ratings)
    return samples, store, ratings, latents


def _attach_judgment_tasks(cfg, rng, latents, samples, ratings) -> None:
    """Add triad picks and matching scores to the rating records, simulating
    raters who perceive latent cosine similarity with a little noise."""
    n = cfg.n_pairs
    if n < 3:
        return
    ids = [s.id for s in samples]
    by_record: dict[int, list[dict]] = {}
    for rec in ratings:
        by_record.setdefault(int(rec["bc_id"].split(":")[1]), []).append(rec)

    def unit(v):
        return v / np.linalg.norm(v)

    for i in range(n):
        pool = np.concatenate([np.arange(i), np.arange(i + 1, n)])
        a, b = (int(j) for j in rng.choice(pool, size=2, replace=False))
        triad = (ids[i], ids[a], ids[b])
        cands = [i, a, b]
        pairs = [(1, 2), (1, 3), (2, 3)]
        for rec in by_record[i]:
            sims = []
            for (p, q) in pairs:
                up, uq = latents[cands[p - 1]], latents[cands[q - 1]]
                sims.append(float(unit(up) @ unit(uq)) + rng.normal(0.0, 0.05))
            rec["triad"] = {"ids": list(triad), "pick": list(pairs[int(np.argmax(sims))])}
            scores = {}
            for cand in cands:
                sim = float(unit(latents[i]) @ unit(latents[cand]))
                scores[ids[cand]] = int(np.clip(round(3.0 + 2.0 * sim + rng.normal(0, 0.4)), 1, 5))
            rec["match_scores"] = scores


def write_ratings(records: Iterable[dict], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"schema": RATINGS_SCHEMA}) + "\n")
        for rec in records:
            fh.write(json.dumps(rec) + "\n")


def read_ratings(path) -> list[dict]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            if lineno == 1 and "schema" in rec:
                if rec["schema"] != RATINGS_SCHEMA:
                    raise BadSchema(f"unexpected ratings schema {rec['schema']!r}")
                continue
            for dim in AFFECTIVE_DIMS:
                if dim in rec and not (isinstance(rec[dim], int) and 1 <= rec[dim] <= 5):
                    raise BadSchema(f"{path}:{lineno}: {dim} must be an integer in 1..5")
            records.append(rec)
    return records
