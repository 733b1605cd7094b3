"""Feed-forward regressor that fills in missing water-footprint and
nutrient values.

Input is the 128-dim name embedding concatenated with a 13-dim relation
one-hot (141 features). Four ReLU hidden layers of width 64 feed a single
ReLU output unit, so predictions are non-negative in normalized target
space. Training is plain minibatch Adam on MSE with hand-written
backpropagation; everything is seeded and deterministic.

Targets span several orders of magnitude (water footprints in the
thousands, nutrients below 100), so they are log1p-transformed, z-scored
per relation, and shifted +3 standard deviations to keep them inside the
non-negative range the output unit can reach.
"""

from __future__ import annotations

import base64
import json
import math
import os
from dataclasses import dataclass, field, asdict
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .align import EMBED_DIM, embed_text
from .graph import (
    Edge,
    Graph,
    IMPUTED,
    Literal,
    NUMERIC_RELATIONS,
    RelationType,
    build_graph,
)

RELATION_ORDER: Tuple[RelationType, ...] = tuple(RelationType)
ONE_HOT_DIM = len(RELATION_ORDER)
INPUT_DIM = EMBED_DIM + ONE_HOT_DIM  # 141
HIDDEN_WIDTH = 64
LAYER_SIZES = (INPUT_DIM, HIDDEN_WIDTH, HIDDEN_WIDTH, HIDDEN_WIDTH, HIDDEN_WIDTH, 1)

#: normalized targets are shifted this many standard deviations upward
NORMALIZER_SHIFT = 3.0

MODEL_FORMAT = "aquasub-model"
MODEL_VERSION = 1


class DimensionMismatch(ValueError):
    pass


class NonFiniteLoss(RuntimeError):
    def __init__(self, epoch: int):
        super().__init__(f"loss became non-finite at epoch {epoch}")
        self.epoch = epoch


@dataclass
class TrainerConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    batch_size: int = 32
    max_epochs: int = 300
    seed: int = 0

    def validate(self) -> None:
        for name in ("learning_rate", "beta1", "beta2", "epsilon", "batch_size", "max_epochs"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class ModelParams:
    weights: List[np.ndarray]
    biases: List[np.ndarray]

    def copy(self) -> "ModelParams":
        return ModelParams([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def all_finite(self) -> bool:
        return all(np.isfinite(a).all() for a in self.weights + self.biases)


@dataclass(frozen=True)
class TrainSample:
    x: np.ndarray  # shape (141,)
    y: float


def relation_one_hot(relation: RelationType) -> np.ndarray:
    vec = np.zeros(ONE_HOT_DIM)
    vec[RELATION_ORDER.index(relation)] = 1.0
    return vec


def make_input(embedding: np.ndarray, relation: RelationType) -> np.ndarray:
    if embedding.shape != (EMBED_DIM,):
        raise DimensionMismatch(f"embedding shape {embedding.shape} != ({EMBED_DIM},)")
    return np.concatenate([embedding, relation_one_hot(relation)])


# --- target normalization ----------------------------------------------


@dataclass
class TargetNormalizer:
    """Per-relation (mean, std) of log1p targets, with a +3 sigma shift."""

    stats: Dict[str, Tuple[float, float]] = field(default_factory=dict)
    shift: float = NORMALIZER_SHIFT

    @classmethod
    def fit(cls, targets: Dict[RelationType, Sequence[float]]) -> "TargetNormalizer":
        stats = {}
        for relation, values in targets.items():
            logged = np.log1p(np.asarray(values, dtype=float))
            mean = float(logged.mean())
            std = float(logged.std())
            if std < 1e-12:
                std = 1.0  # degenerate relation: fall back to unit scale
            stats[relation.value] = (mean, std)
        return cls(stats)

    def normalize(self, relation: RelationType, y: float) -> float:
        mean, std = self.stats[relation.value]
        return (math.log1p(y) - mean) / std + self.shift

    def denormalize(self, relation: RelationType, z: float) -> float:
        mean, std = self.stats[relation.value]
        return max(0.0, math.expm1((z - self.shift) * std + mean))

    def has(self, relation: RelationType) -> bool:
        return relation.value in self.stats


# --- model ------------------------------------------------------------------


def init_model(cfg: TrainerConfig) -> ModelParams:
    """He-style uniform init, biases zero, deterministic under cfg.seed."""
    rng = np.random.default_rng(cfg.seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(LAYER_SIZES[:-1], LAYER_SIZES[1:]):
        bound = math.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return ModelParams(weights, biases)


def _relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def _forward_full(m: ModelParams, x: np.ndarray) -> Tuple[np.ndarray, List[np.ndarray], List[np.ndarray]]:
    """Returns (output, pre-activations, activations); x is (B, INPUT_DIM)."""
    pre, act = [], [x]
    h = x
    for w, b in zip(m.weights, m.biases):
        z = h @ w + b
        h = _relu(z)  # output layer is ReLU too, keeping predictions >= 0
        pre.append(z)
        act.append(h)
    return h[:, 0], pre, act


def forward(m: ModelParams, x: np.ndarray) -> float:
    """Predict in normalized target space for a single 141-dim input."""
    x = np.asarray(x, dtype=float)
    if x.shape != (INPUT_DIM,):
        raise DimensionMismatch(f"input shape {x.shape} != ({INPUT_DIM},)")
    out, _, _ = _forward_full(m, x[None, :])
    return float(out[0])


def forward_batch(m: ModelParams, xs: np.ndarray) -> np.ndarray:
    xs = np.asarray(xs, dtype=float)
    if xs.ndim != 2 or xs.shape[1] != INPUT_DIM:
        raise DimensionMismatch(f"batch shape {xs.shape} != (*, {INPUT_DIM})")
    out, _, _ = _forward_full(m, xs)
    return out


def loss_and_grad(m: ModelParams, batch: Sequence[TrainSample]) -> Tuple[float, ModelParams]:
    """Mean squared error over the batch plus backpropagated gradients.

    The ReLU subgradient at exactly 0 is taken as 0.
    """
    if not batch:
        raise ValueError("empty batch")
    xs = np.stack([s.x for s in batch]).astype(float)
    ys = np.array([s.y for s in batch], dtype=float)
    out, pre, act = _forward_full(m, xs)
    residual = out - ys
    mse = float(np.mean(residual**2))

    grads_w = [np.zeros_like(w) for w in m.weights]
    grads_b = [np.zeros_like(b) for b in m.biases]
    batch_size = len(batch)
    delta = (2.0 / batch_size) * residual[:, None]  # dL/d out
    for layer in reversed(range(len(m.weights))):
        delta = delta * (pre[layer] > 0)  # through ReLU
        grads_w[layer] = act[layer].T @ delta
        grads_b[layer] = delta.sum(axis=0)
        if layer > 0:
            delta = delta @ m.weights[layer].T
    return mse, ModelParams(grads_w, grads_b)


def _dataset_mse(m: ModelParams, xs: np.ndarray, ys: np.ndarray) -> float:
    out, _, _ = _forward_full(m, xs)
    return float(np.mean((out - ys) ** 2))


def train(
    data: Sequence[TrainSample],
    cfg: TrainerConfig,
    model: Optional[ModelParams] = None,
) -> Tuple[ModelParams, List[float]]:
    """Minibatch Adam on MSE; returns the model and the per-epoch loss curve.

    The curve has ``max_epochs + 1`` entries: full-dataset MSE before any
    update, then after each epoch.
    """
    if not data:
        raise ValueError("training set is empty")
    cfg.validate()
    m = model.copy() if model is not None else init_model(cfg)
    rng = np.random.default_rng(cfg.seed + 1)  # shuffling stream

    moment1_w = [np.zeros_like(w) for w in m.weights]
    moment2_w = [np.zeros_like(w) for w in m.weights]
    moment1_b = [np.zeros_like(b) for b in m.biases]
    moment2_b = [np.zeros_like(b) for b in m.biases]
    step = 0

    xs = np.stack([s.x for s in data]).astype(float)
    ys = np.array([s.y for s in data], dtype=float)
    curve = [_dataset_mse(m, xs, ys)]

    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(len(data))
        for start in range(0, len(data), cfg.batch_size):
            batch = [data[i] for i in order[start : start + cfg.batch_size]]
            mse, grads = loss_and_grad(m, batch)
            if not math.isfinite(mse):
                raise NonFiniteLoss(epoch)
            step += 1
            correction1 = 1.0 - cfg.beta1**step
            correction2 = 1.0 - cfg.beta2**step
            for i in range(len(m.weights)):
                for params, grad, m1, m2 in (
                    (m.weights[i], grads.weights[i], moment1_w, moment2_w),
                    (m.biases[i], grads.biases[i], moment1_b, moment2_b),
                ):
                    m1[i] = cfg.beta1 * m1[i] + (1.0 - cfg.beta1) * grad
                    m2[i] = cfg.beta2 * m2[i] + (1.0 - cfg.beta2) * grad**2
                    m_hat = m1[i] / correction1
                    v_hat = m2[i] / correction2
                    params -= cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.epsilon)
        epoch_mse = _dataset_mse(m, xs, ys)
        if not math.isfinite(epoch_mse) or not m.all_finite():
            raise NonFiniteLoss(epoch)
        curve.append(epoch_mse)
    return m, curve


# --- graph wiring -----------------------------------------------------------


def build_training_set(
    graph: Graph,
) -> Tuple[List[TrainSample], TargetNormalizer]:
    """Training pairs from every measured numeric edge of every ingredient."""
    raw: Dict[RelationType, List[Tuple[str, float]]] = {}
    for ingredient in graph.ingredient_ids():
        profile = graph.get_profile(ingredient)
        for relation in NUMERIC_RELATIONS:
            vp = _relation_value(profile, relation)
            if vp is not None and not vp.imputed:
                raw.setdefault(relation, []).append((profile.display_name, vp.value))
    normalizer = TargetNormalizer.fit(
        {rel: [v for _, v in pairs] for rel, pairs in raw.items()}
    )
    samples = []
    for relation in NUMERIC_RELATIONS:
        for name, value in raw.get(relation, []):
            x = make_input(embed_text(name), relation)
            samples.append(TrainSample(x, normalizer.normalize(relation, value)))
    return samples, normalizer


def _relation_value(profile, relation: RelationType):
    if relation is RelationType.HAS_WATER_FOOTPRINT:
        return profile.wf
    return profile.nutrients.get(relation.value[len("has_") :])


def impute_missing(graph: Graph, m: ModelParams, normalizer: TargetNormalizer) -> Graph:
    """New graph version with a predicted edge for every missing numeric
    relation of every ingredient; measured edges are never touched."""
    new_edges = list(graph.edges)
    for ingredient in graph.ingredient_ids():
        profile = graph.get_profile(ingredient)
        embedding = embed_text(profile.display_name)
        for relation in NUMERIC_RELATIONS:
            if _relation_value(profile, relation) is not None:
                continue
            if not normalizer.has(relation):
                continue  # no training data for this relation at all
            z = forward(m, make_input(embedding, relation))
            value = normalizer.denormalize(relation, z)
            new_edges.append(
                Edge(ingredient, relation, Literal(float(value)), IMPUTED)
            )
    return build_graph(new_edges)


# --- persistence -----------------------------------------------------------


def _encode_array(arr: np.ndarray) -> dict:
    data = np.ascontiguousarray(arr, dtype=np.float64)
    return {
        "shape": list(data.shape),
        "data": base64.b64encode(data.tobytes()).decode("ascii"),
    }


def _decode_array(spec: dict) -> np.ndarray:
    raw = base64.b64decode(spec["data"])
    return np.frombuffer(raw, dtype=np.float64).reshape(spec["shape"]).copy()


def save_model(
    path: str,
    m: ModelParams,
    cfg: TrainerConfig,
    normalizer: TargetNormalizer,
) -> None:
    """Versioned JSON container; identical inputs produce identical bytes."""
    payload = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "config": asdict(cfg),
        "normalizer": {"shift": normalizer.shift, "stats": normalizer.stats},
        "weights": [_encode_array(w) for w in m.weights],
        "biases": [_encode_array(b) for b in m.biases],
    }
    text = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def load_model(path: str) -> Tuple[ModelParams, TrainerConfig, TargetNormalizer]:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("format") != MODEL_FORMAT or payload.get("version") != MODEL_VERSION:
        raise ValueError(f"not a model file (or unsupported version): {path}")
    m = ModelParams(
        [_decode_array(spec) for spec in payload["weights"]],
        [_decode_array(spec) for spec in payload["biases"]],
    )
    cfg = TrainerConfig(**payload["config"])
    stats = {rel: tuple(ms) for rel, ms in payload["normalizer"]["stats"].items()}
    normalizer = TargetNormalizer(stats, payload["normalizer"]["shift"])
    return m, cfg, normalizer
