"""Explorer bundle: backchannel embeddings projected onto the learned
affective axes, plus the prosodic fields the UI aggregates over regions.

All region statistics are computed here, server-side, so the browser client
never aggregates numbers on its own.
"""

from __future__ import annotations

import hashlib
import json
from typing import Iterable, Mapping, Sequence

import numpy as np

from .corpus import BackchannelSample
from .errors import BadSchema, MissingFeature, MissingProbe
from .evaluation import RidgeProbe
from .features import AFFECTIVE_DIMS, FeatureStore
from .model import ProjectionModel, encode_backchannel

BUNDLE_FORMAT = "bc-explorer/1"


def model_hash(model: ProjectionModel) -> str:
    """Stable content hash of a model's config and parameters."""
    doc = {
        "config": str(model.config),
        "parameters": {k: v.tolist() for k, v in model.parameters().items()},
    }
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()


def build_bundle(
    model: ProjectionModel,
    samples: Sequence[BackchannelSample],
    store: FeatureStore,
    probes: Mapping[str, RidgeProbe],
    probe_source: str = "",
) -> dict:
    """Project every sample's backchannel embedding through each affective
    probe; copy the prosodic fields from the manifest."""
    missing_dims = [d for d in AFFECTIVE_DIMS if d not in probes]
    if missing_dims:
        raise MissingProbe(f"no fitted probe for dimensions {missing_dims}")
    points = []
    for s in samples:
        if not store.has("bc_audio", s.id):
            raise MissingFeature(f"sample {s.id} has no bc_audio vector")
        if s.pitch_range_st is None or s.duration_frames is None:
            raise MissingFeature(f"sample {s.id} lacks prosodic fields")
        z = encode_backchannel(model, store.get("bc_audio", s.id))
        coords = {}
        for dim in AFFECTIVE_DIMS:
            value = float(probes[dim].predict(z.reshape(1, -1))[0])
            if not np.isfinite(value):
                raise MissingFeature(f"non-finite {dim} coordinate for {s.id}")
            coords[dim] = value
        point = {
            "id": s.id,
            "lexeme": s.lexeme,
            "coords": coords,
            "duration_frames": int(s.duration_frames),
            "pitch_range_st": float(s.pitch_range_st),
        }
        if s.audio_ref:
            point["audio_ref"] = s.audio_ref
        points.append(point)
    if len({p["id"] for p in points}) != len(points):
        raise BadSchema("duplicate point ids in bundle")
    return {
        "format": BUNDLE_FORMAT,
        "axes": {
            "names": list(AFFECTIVE_DIMS),
            "probe_alpha": float(next(iter(probes.values())).alpha) if probes else None,
            "probe_source": probe_source,
            "model_hash": model_hash(model),
        },
        "points": points,
    }


def export_explorer(
    model: ProjectionModel,
    samples: Sequence[BackchannelSample],
    store: FeatureStore,
    probes: Mapping[str, RidgeProbe],
    out_path,
    probe_source: str = "",
) -> dict:
    bundle = build_bundle(model, samples, store, probes, probe_source)
    with open(out_path, "w", encoding="utf-8") as fh:
        json.dump(bundle, fh, sort_keys=True)
    return bundle


def load_bundle(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        bundle = json.load(fh)
    validate_bundle(bundle)
    return bundle


def validate_bundle(bundle: dict) -> None:
    if not isinstance(bundle, dict) or bundle.get("format") != BUNDLE_FORMAT:
        raise BadSchema(f"expected bundle format {BUNDLE_FORMAT!r}")
    axes = bundle.get("axes", {})
    if not set(axes.get("names", [])) <= set(AFFECTIVE_DIMS):
        raise BadSchema(f"axes must be a subset of {AFFECTIVE_DIMS}")
    seen = set()
    for p in bundle.get("points", []):
        if p["id"] in seen:
            raise BadSchema(f"duplicate point id {p['id']!r}")
        seen.add(p["id"])
        for dim in AFFECTIVE_DIMS:
            if not np.isfinite(p["coords"][dim]):
                raise BadSchema(f"non-finite coordinate on point {p['id']!r}")


def region_stats(
    points: Iterable[dict],
    xdim: str,
    ydim: str,
    xmin: float,
    xmax: float,
    ymin: float,
    ymax: float,
    lexemes: Sequence[str] | None = None,
) -> dict:
    """Count and prosodic averages over points inside the closed rectangle,
    optionally restricted to the given lexemes."""
    if xdim not in AFFECTIVE_DIMS or ydim not in AFFECTIVE_DIMS:
        raise ValueError(f"axes must be in {AFFECTIVE_DIMS}, got {xdim!r}/{ydim!r}")
    if xmin > xmax or ymin > ymax:
        raise ValueError("rectangle bounds must satisfy min <= max")
    allowed = set(lexemes) if lexemes else None
    durations = []
    ranges = []
    for p in points:
        if allowed is not None and p["lexeme"] not in allowed:
            continue
        x, y = p["coords"][xdim], p["coords"][ydim]
        if xmin <= x <= xmax and ymin <= y <= ymax:
            durations.append(p["duration_frames"])
            ranges.append(p["pitch_range_st"])
    count = len(durations)
    return {
        "count": count,
        "avg_duration_frames": float(np.mean(durations)) if count else None,
        "avg_pitch_range_st": float(np.mean(ranges)) if count else None,
    }
