"""Joint context-backchannel projection model.

The context path concatenates text and audio features (per the configured
modality) and projects them with a small MLP; the backchannel path is a
single linear layer over audio features. Both outputs are L2-normalized, so
the temperature-scaled similarity matrix holds cosines. Training minimizes a
symmetric InfoNCE objective with in-batch negatives, using hand-derived
gradients and Adam; all arithmetic is float64 numpy with a fixed reduction
order, so runs are bitwise reproducible for a given seed.
"""

from __future__ import annotations

import copy
import json
import logging
import warnings
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .corpus import BackchannelSample
from .errors import (
    CorruptFile,
    CountMismatch,
    DimensionMismatch,
    EmptySplit,
    InvalidConfig,
    MissingModality,
    NonFiniteLoss,
    VersionMismatch,
)
from .features import FeatureStore

logger = logging.getLogger(__name__)

MODEL_FORMAT = "bc-align/1"

MODALITIES = ("audio_text", "text", "audio")
N_LAYERS_GRID = (1, 2, 3, 4)
EMBED_DIM_GRID = (64, 128, 256)
BATCH_SIZE_GRID = (1024, 2048, 4096, 8192)
TEMPERATURE = 0.07
MAX_EPOCHS_CAP = 20


@dataclass
class ModelConfig:
    modality: str = "audio_text"
    n_layers: int = 3
    embed_dim: int = 64
    batch_size: int = 1024
    temperature: float = TEMPERATURE
    max_epochs: int = 20
    seed: int = 0
    learning_rate: float = 1e-3
    dim_text: int = 0
    dim_audio: int = 0
    allow_unsafe: bool = False

    def __post_init__(self):
        if self.modality not in MODALITIES:
            raise InvalidConfig(f"modality must be one of {MODALITIES}, got {self.modality!r}")
        if self.learning_rate <= 0:
            raise InvalidConfig("learning_rate must be positive")
        if self.max_epochs < 1:
            raise InvalidConfig("max_epochs must be >= 1")
        if self.modality in ("audio_text", "text") and self.dim_text < 1:
            raise InvalidConfig("dim_text required for text-bearing modalities")
        if self.modality in ("audio_text", "audio") and self.dim_audio < 1:
            raise InvalidConfig("dim_audio required for audio-bearing modalities")
        if self.dim_audio < 1:
            raise InvalidConfig("dim_audio required (backchannel features are audio)")
        if not self.allow_unsafe:
            if self.n_layers not in N_LAYERS_GRID:
                raise InvalidConfig(f"n_layers {self.n_layers} outside grid {N_LAYERS_GRID}")
            if self.embed_dim not in EMBED_DIM_GRID:
                raise InvalidConfig(f"embed_dim {self.embed_dim} outside grid {EMBED_DIM_GRID}")
            if self.batch_size not in BATCH_SIZE_GRID:
                raise InvalidConfig(f"batch_size {self.batch_size} outside grid {BATCH_SIZE_GRID}")
            if self.temperature != TEMPERATURE:
                raise InvalidConfig(f"temperature is fixed at {TEMPERATURE}")
            if self.max_epochs > MAX_EPOCHS_CAP:
                raise InvalidConfig(f"max_epochs capped at {MAX_EPOCHS_CAP}")
        elif self.n_layers < 1 or self.embed_dim < 1 or self.batch_size < 1:
            raise InvalidConfig("n_layers, embed_dim, batch_size must be >= 1")

    @property
    def input_dim(self) -> int:
        if self.modality == "audio_text":
            return self.dim_text + self.dim_audio
        if self.modality == "text":
            return self.dim_text
        return self.dim_audio


@dataclass
class ProjectionModel:
    config: ModelConfig
    ctx_weights: list[np.ndarray] = field(repr=False, default_factory=list)
    ctx_biases: list[np.ndarray] = field(repr=False, default_factory=list)
    bc_weight: np.ndarray = field(repr=False, default=None)
    bc_bias: np.ndarray = field(repr=False, default=None)

    def parameters(self) -> dict[str, np.ndarray]:
        params = {}
        for i, (w, b) in enumerate(zip(self.ctx_weights, self.ctx_biases)):
            params[f"ctx.{i}.weight"] = w
            params[f"ctx.{i}.bias"] = b
        params["bc.weight"] = self.bc_weight
        params["bc.bias"] = self.bc_bias
        return params


@dataclass
class Batch:
    ctx_text: np.ndarray | None
    ctx_audio: np.ndarray | None
    bc_audio: np.ndarray

    @property
    def size(self) -> int:
        return self.bc_audio.shape[0]


def init_model(cfg: ModelConfig, seed: int | None = None) -> ProjectionModel:
    """Uniform fan-in initialization: W ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), zero biases."""
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    dims = [cfg.input_dim] + [cfg.embed_dim] * cfg.n_layers
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    bc_bound = 1.0 / np.sqrt(cfg.dim_audio)
    bc_weight = rng.uniform(-bc_bound, bc_bound, size=(cfg.embed_dim, cfg.dim_audio))
    return ProjectionModel(cfg, weights, biases, bc_weight, np.zeros(cfg.embed_dim))


def _normalize_rows(v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    norms = np.linalg.norm(v, axis=-1, keepdims=True)
    norms = np.maximum(norms, 1e-30)
    return v / norms, norms


def _context_input(model: ProjectionModel, z_text, z_audio) -> np.ndarray:
    cfg = model.config
    if cfg.modality in ("audio_text", "text"):
        if z_text is None:
            raise MissingModality(f"modality {cfg.modality!r} needs text features")
        z_text = np.atleast_2d(np.asarray(z_text, dtype=np.float64))
        if z_text.shape[1] != cfg.dim_text:
            raise DimensionMismatch(f"text dim {z_text.shape[1]} != {cfg.dim_text}")
    if cfg.modality in ("audio_text", "audio"):
        if z_audio is None:
            raise MissingModality(f"modality {cfg.modality!r} needs audio features")
        z_audio = np.atleast_2d(np.asarray(z_audio, dtype=np.float64))
        if z_audio.shape[1] != cfg.dim_audio:
            raise DimensionMismatch(f"audio dim {z_audio.shape[1]} != {cfg.dim_audio}")
    if cfg.modality == "audio_text":
        return np.hstack([z_text, z_audio])
    return z_text if cfg.modality == "text" else z_audio


def _forward_context(model: ProjectionModel, x: np.ndarray):
    """Returns (activations, preactivations, unnormalized v, norms, Z)."""
    acts = [x]
    pres = []
    h = x
    for w, b in zip(model.ctx_weights[:-1], model.ctx_biases[:-1]):
        z = h @ w.T + b
        pres.append(z)
        h = np.maximum(z, 0.0)
        acts.append(h)
    v = h @ model.ctx_weights[-1].T + model.ctx_biases[-1]
    z_norm, norms = _normalize_rows(v)
    return acts, pres, v, norms, z_norm


def _forward_backchannel(model: ProjectionModel, y: np.ndarray):
    v = y @ model.bc_weight.T + model.bc_bias
    z_norm, norms = _normalize_rows(v)
    return v, norms, z_norm


def encode_context(model: ProjectionModel, z_text=None, z_audio=None) -> np.ndarray:
    """Unit-norm context embedding; accepts a single vector or a matrix of rows."""
    single = (z_text is not None and np.ndim(z_text) == 1) or (
        z_audio is not None and np.ndim(z_audio) == 1
    )
    x = _context_input(model, z_text, z_audio)
    z = _forward_context(model, x)[4]
    return z[0] if single else z


def encode_backchannel(model: ProjectionModel, z_bc) -> np.ndarray:
    arr = np.asarray(z_bc, dtype=np.float64)
    single = arr.ndim == 1
    arr = np.atleast_2d(arr)
    if arr.shape[1] != model.config.dim_audio:
        raise DimensionMismatch(f"bc dim {arr.shape[1]} != {model.config.dim_audio}")
    z = _forward_backchannel(model, arr)[2]
    return z[0] if single else z


def similarity_matrix(ctx_embs: np.ndarray, bc_embs: np.ndarray, tau: float = TEMPERATURE) -> np.ndarray:
    """S[i, j] = <ctx_i, bc_j> / tau over unit vectors."""
    ctx_embs = np.atleast_2d(ctx_embs)
    bc_embs = np.atleast_2d(bc_embs)
    if ctx_embs.shape[0] != bc_embs.shape[0]:
        raise CountMismatch(f"{ctx_embs.shape[0]} contexts vs {bc_embs.shape[0]} backchannels")
    return ctx_embs @ bc_embs.T / tau


def _logsumexp(a: np.ndarray, axis: int) -> np.ndarray:
    m = np.max(a, axis=axis, keepdims=True)
    return np.squeeze(m, axis) + np.log(np.sum(np.exp(a - m), axis=axis))


def info_nce_parts(S: np.ndarray) -> tuple[float, float, float]:
    """(total, context term, backchannel term) of the symmetric InfoNCE loss."""
    S = np.asarray(S, dtype=np.float64)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise CountMismatch(f"similarity matrix must be square, got {S.shape}")
    diag = np.diag(S)
    l_ctx = float(np.mean(_logsumexp(S, axis=1) - diag))
    l_bc = float(np.mean(_logsumexp(S, axis=0) - diag))
    return 0.5 * (l_ctx + l_bc), l_ctx, l_bc


def info_nce_loss(S: np.ndarray) -> float:
    return info_nce_parts(S)[0]


def _softmax(a: np.ndarray, axis: int) -> np.ndarray:
    m = np.max(a, axis=axis, keepdims=True)
    e = np.exp(a - m)
    return e / np.sum(e, axis=axis, keepdims=True)


def batch_loss(model: ProjectionModel, batch: Batch, component: str = "symmetric") -> float:
    """Forward pass only; used by trainers for monitoring and by tests as the
    scalar function behind finite-difference checks."""
    x = _context_input(model, batch.ctx_text, batch.ctx_audio)
    z_ctx = _forward_context(model, x)[4]
    z_bc = _forward_backchannel(model, batch.bc_audio)[2]
    S = similarity_matrix(z_ctx, z_bc, model.config.temperature)
    total, l_ctx, l_bc = info_nce_parts(S)
    return {"symmetric": total, "context": l_ctx, "backchannel": l_bc}[component]


def loss_gradients(
    model: ProjectionModel, batch: Batch, component: str = "symmetric"
) -> tuple[float, dict[str, np.ndarray]]:
    """Analytic gradients of the loss w.r.t. every parameter, including
    through the L2 normalization and the modality concatenation.

    ``component`` selects the symmetric loss (default) or one of its two
    cross-entropy terms, which is useful for diagnostics.
    """
    cfg = model.config
    x = _context_input(model, batch.ctx_text, batch.ctx_audio)
    acts, pres, v_ctx, n_ctx, z_ctx = _forward_context(model, x)
    v_bc, n_bc, z_bc = _forward_backchannel(model, batch.bc_audio)
    S = similarity_matrix(z_ctx, z_bc, cfg.temperature)
    total, l_ctx, l_bc = info_nce_parts(S)
    loss = {"symmetric": total, "context": l_ctx, "backchannel": l_bc}[component]

    n = S.shape[0]
    eye = np.eye(n)
    d_s = np.zeros_like(S)
    if component in ("symmetric", "context"):
        weight = 0.5 if component == "symmetric" else 1.0
        d_s += weight * (_softmax(S, axis=1) - eye) / n
    if component in ("symmetric", "backchannel"):
        weight = 0.5 if component == "symmetric" else 1.0
        d_s += weight * (_softmax(S, axis=0) - eye) / n

    d_zctx = d_s @ z_bc / cfg.temperature
    d_zbc = d_s.T @ z_ctx / cfg.temperature

    grads: dict[str, np.ndarray] = {}

    # backchannel head through normalization
    d_vbc = (d_zbc - z_bc * np.sum(d_zbc * z_bc, axis=1, keepdims=True)) / n_bc
    grads["bc.weight"] = d_vbc.T @ batch.bc_audio
    grads["bc.bias"] = d_vbc.sum(axis=0)

    # context MLP through normalization
    d_v = (d_zctx - z_ctx * np.sum(d_zctx * z_ctx, axis=1, keepdims=True)) / n_ctx
    last = len(model.ctx_weights) - 1
    grads[f"ctx.{last}.weight"] = d_v.T @ acts[-1]
    grads[f"ctx.{last}.bias"] = d_v.sum(axis=0)
    d_h = d_v @ model.ctx_weights[last]
    for layer in range(last - 1, -1, -1):
        d_z = d_h * (pres[layer] > 0)
        grads[f"ctx.{layer}.weight"] = d_z.T @ acts[layer]
        grads[f"ctx.{layer}.bias"] = d_z.sum(axis=0)
        d_h = d_z @ model.ctx_weights[layer]
    return loss, grads


class Adam:
    """Standard Adam with bias correction (beta1=0.9, beta2=0.999, eps=1e-8)."""

    def __init__(self, params: dict[str, np.ndarray], lr: float):
        self.lr = lr
        self.beta1, self.beta2, self.eps = 0.9, 0.999, 1e-8
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for k, p in params.items():
            g = grads[k]
            self.m[k] = self.beta1 * self.m[k] + (1 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1 - self.beta2) * g * g
            p -= self.lr * (self.m[k] / bc1) / (np.sqrt(self.v[k] / bc2) + self.eps)


@dataclass
class TrainHistory:
    epochs: list[dict]
    best_epoch: int
    best_val_topk: float


def make_batch(
    samples: Sequence[BackchannelSample], store: FeatureStore, modality: str
) -> Batch:
    ids = [s.id for s in samples]
    text = store.matrix("ctx_text", ids) if modality in ("audio_text", "text") else None
    audio = store.matrix("ctx_audio", ids) if modality in ("audio_text", "audio") else None
    return Batch(text, audio, store.matrix("bc_audio", ids))


def train(
    model: ProjectionModel,
    samples: Sequence[BackchannelSample],
    store: FeatureStore,
    cfg: ModelConfig | None = None,
    metric_k_percent: float = 10.0,
) -> TrainHistory:
    """Mini-batch gradient descent with per-epoch validation selection.

    Batches are reshuffled each epoch; after each epoch the validation split
    is pooled whole and scored with top-k% accuracy, and the parameter
    snapshot with the best score within ``max_epochs`` is restored into
    ``model`` before returning.
    """
    from .evaluation import topk_percent_accuracy

    cfg = cfg or model.config
    train_samples = [s for s in samples if s.split == "train"]
    val_samples = [s for s in samples if s.split == "val"]
    if not train_samples:
        raise EmptySplit("no train-split samples")
    if not val_samples:
        raise EmptySplit("no val-split samples")

    batch_size = cfg.batch_size
    if batch_size > len(train_samples):
        warnings.warn(
            f"batch_size {batch_size} exceeds train set size {len(train_samples)}; "
            "using one full batch"
        )
        batch_size = len(train_samples)

    train_batch_all = make_batch(train_samples, store, cfg.modality)
    val_batch = make_batch(val_samples, store, cfg.modality)

    rng = np.random.default_rng(cfg.seed)
    params = model.parameters()
    opt = Adam(params, cfg.learning_rate)
    history: list[dict] = []
    best_epoch, best_metric = -1, -np.inf
    best_snapshot: dict[str, np.ndarray] | None = None

    def slice_batch(idx: np.ndarray) -> Batch:
        return Batch(
            None if train_batch_all.ctx_text is None else train_batch_all.ctx_text[idx],
            None if train_batch_all.ctx_audio is None else train_batch_all.ctx_audio[idx],
            train_batch_all.bc_audio[idx],
        )

    for epoch in range(cfg.max_epochs):
        perm = rng.permutation(len(train_samples))
        losses = []
        for start in range(0, len(perm), batch_size):
            idx = perm[start : start + batch_size]
            if idx.size < 2:
                continue  # a singleton batch has zero loss and zero gradient
            loss, grads = loss_gradients(model, slice_batch(idx))
            if not np.isfinite(loss):
                raise NonFiniteLoss(
                    f"non-finite loss at epoch {epoch}, batch offset {start}; "
                    f"last finite losses: {losses[-3:]}"
                )
            opt.step(params, grads)
            losses.append(loss)

        z_ctx = encode_context(model, val_batch.ctx_text, val_batch.ctx_audio)
        z_bc = encode_backchannel(model, val_batch.bc_audio)
        val_topk = topk_percent_accuracy(z_ctx, z_bc, np.arange(len(val_samples)), metric_k_percent)
        history.append(
            {"epoch": epoch, "train_loss": float(np.mean(losses)), "val_topk": val_topk}
        )
        logger.info("epoch %d: loss %.4f, val top-%g%% %.3f", epoch, history[-1]["train_loss"], metric_k_percent, val_topk)
        if val_topk > best_metric:
            best_metric = val_topk
            best_epoch = epoch
            best_snapshot = {k: v.copy() for k, v in params.items()}

    assert best_snapshot is not None
    for k, v in params.items():
        v[...] = best_snapshot[k]
    return TrainHistory(history, best_epoch, float(best_metric))


def save_model(model: ProjectionModel, path) -> None:
    doc = {
        "format": MODEL_FORMAT,
        "activation": "relu",  # hidden layers; final layer linear, then L2 norm
        "config": asdict(model.config),
        "parameters": {
            "ctx": [
                {"weight": w.tolist(), "bias": b.tolist()}
                for w, b in zip(model.ctx_weights, model.ctx_biases)
            ],
            "bc": {"weight": model.bc_weight.tolist(), "bias": model.bc_bias.tolist()},
        },
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)


def load_model(path) -> ProjectionModel:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise CorruptFile(f"{path}: cannot decode model file: {e}") from e
    if not isinstance(doc, dict) or doc.get("format") != MODEL_FORMAT:
        raise VersionMismatch(
            f"{path}: expected format {MODEL_FORMAT!r}, got {doc.get('format')!r}"
            if isinstance(doc, dict)
            else f"{path}: not a model document"
        )
    if doc.get("activation", "relu") != "relu":
        raise CorruptFile(f"{path}: unsupported activation {doc.get('activation')!r}")
    try:
        cfg = ModelConfig(**doc["config"])
        ctx = doc["parameters"]["ctx"]
        bc = doc["parameters"]["bc"]
        model = ProjectionModel(
            cfg,
            [np.array(layer["weight"], dtype=np.float64) for layer in ctx],
            [np.array(layer["bias"], dtype=np.float64) for layer in ctx],
            np.array(bc["weight"], dtype=np.float64),
            np.array(bc["bias"], dtype=np.float64),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise CorruptFile(f"{path}: malformed model document: {e}") from e
    if len(model.ctx_weights) != cfg.n_layers:
        raise CorruptFile(f"{path}: {len(model.ctx_weights)} layers but config says {cfg.n_layers}")
    if model.bc_weight.shape != (cfg.embed_dim, cfg.dim_audio):
        raise CorruptFile(f"{path}: backchannel head shape {model.bc_weight.shape} disagrees with config")
    return model


def clone_model(model: ProjectionModel) -> ProjectionModel:
    return copy.deepcopy(model)
