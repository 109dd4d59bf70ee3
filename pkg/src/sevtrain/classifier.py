"""Native linear classifier: multinomial logistic regression over hashed
n-gram features, trained with deterministic minibatch updates.

The training objective is mean cross-entropy of softmax(W x + b) plus an L2
penalty of 0.5 * l2_penalty * ||W||^2 (the bias is not penalized). Weights
start at zero, data is reshuffled every epoch by a PRNG seeded from the
config seed, and training is single-threaded, so a fixed seed reproduces the
weight matrix bit for bit on a given platform and build.
"""

from __future__ import annotations

import json
import zlib
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .corpus import Dataset, DatasetKind, SeverityLabel, LABELS
from .errors import ConfigError, DataError, TrainingError
from .features import FeatureConfig, FeatureVector, featurize

N_CLASSES = 3

MODEL_FORMAT = "sevtrain-linear"
MODEL_FORMAT_VERSION = 1

_ADAM_BETA1 = 0.9
_ADAM_BETA2 = 0.999
_ADAM_EPS = 1e-8


class Optimizer(Enum):
    SGD = "sgd"
    ADAM = "adam"  # adaptive moment estimation


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters for one training stage.

    Defaults suit the native linear model; external transformer backends get
    their own defaults (see sevtrain.config). epochs=0 is allowed and leaves
    the model at its initialization.
    """

    optimizer: Optimizer = Optimizer.SGD
    learning_rate: float = 0.1
    max_input_length: int = 256
    batch_size: int = 8
    epochs: int = 10
    l2_penalty: float = 1e-6
    seed: int = 0

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.max_input_length < 1:
            raise ConfigError("max_input_length must be positive")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be positive")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.l2_penalty < 0:
            raise ConfigError("l2_penalty must be >= 0")

    def to_wire(self) -> dict:
        return {
            "optimizer": self.optimizer.value,
            "learning_rate": self.learning_rate,
            "max_input_length": self.max_input_length,
            "batch_size": self.batch_size,
            "epochs": self.epochs,
            "l2_penalty": self.l2_penalty,
            "seed": self.seed,
        }

    @classmethod
    def from_wire(cls, obj: dict) -> "TrainConfig":
        """Build from a wire-protocol config dict; unknown keys are ignored."""
        kwargs = {}
        if "optimizer" in obj:
            try:
                kwargs["optimizer"] = Optimizer(str(obj["optimizer"]).lower())
            except ValueError:
                allowed = ", ".join(o.value for o in Optimizer)
                raise ConfigError(
                    f"unknown optimizer {obj['optimizer']!r}; allowed: {allowed}"
                ) from None
        for key, conv in (
            ("learning_rate", float),
            ("max_input_length", int),
            ("batch_size", int),
            ("epochs", int),
            ("l2_penalty", float),
            ("seed", int),
        ):
            if key in obj:
                kwargs[key] = conv(obj[key])
        return cls(**kwargs)


@dataclass
class LinearModel:
    """Weights (3 x dim), bias (3,), and the feature config they were fit with.

    The class axis uses the canonical Low=0 / Moderate=1 / Severe=2 encoding.
    """

    weights: np.ndarray
    bias: np.ndarray
    feature_config: FeatureConfig

    @classmethod
    def zeros(cls, feature_config: Optional[FeatureConfig] = None) -> "LinearModel":
        cfg = feature_config or FeatureConfig()
        return cls(
            np.zeros((N_CLASSES, cfg.dim), dtype=np.float64),
            np.zeros(N_CLASSES, dtype=np.float64),
            cfg,
        )

    def logits_for(self, vec: FeatureVector) -> np.ndarray:
        return self.weights[:, vec.indices] @ vec.values + self.bias


def softmax(logits: np.ndarray) -> np.ndarray:
    """Exp-normalize with max subtraction; preserves argmax, rows sum to 1."""
    z = np.asarray(logits, dtype=np.float64)
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def _log_probs(logits: np.ndarray) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    shifted = z - z.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def _batch_logits(
    weights: np.ndarray, bias: np.ndarray, feats: Sequence[FeatureVector]
) -> np.ndarray:
    if not feats:
        return np.zeros((0, N_CLASSES), dtype=np.float64)
    return np.stack([weights[:, f.indices] @ f.values + bias for f in feats])


def loss_and_grad(
    weights: np.ndarray,
    bias: np.ndarray,
    feats: Sequence[FeatureVector],
    labels: Sequence[int],
    l2_penalty: float = 0.0,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean cross-entropy + 0.5*l2*||W||^2, with its analytic gradient."""
    n = len(feats)
    if n == 0:
        raise DataError("loss_and_grad requires at least one sample")
    y = np.asarray(labels, dtype=np.int64)
    logits = _batch_logits(weights, bias, feats)
    logp = _log_probs(logits)
    loss = float(-logp[np.arange(n), y].mean())
    loss += 0.5 * l2_penalty * float((weights**2).sum())
    g = np.exp(logp)
    g[np.arange(n), y] -= 1.0
    g /= n
    grad_w = l2_penalty * weights
    for f, gi in zip(feats, g):
        grad_w[:, f.indices] += np.outer(gi, f.values)
    grad_b = g.sum(axis=0)
    return loss, grad_w, grad_b


def fit(
    ds: Dataset,
    cfg: TrainConfig,
    *,
    feature_config: Optional[FeatureConfig] = None,
    init: Optional[LinearModel] = None,
) -> LinearModel:
    """Train on a labeled dataset; pass init to continue training a model.

    When init is given its feature config wins (the continued model must
    featurize exactly like the original); otherwise feature_config or a
    default config with max_tokens = cfg.max_input_length is used.
    """
    if ds.kind is not DatasetKind.LABELED:
        raise DataError("fit requires a labeled dataset")
    if len(ds) == 0:
        raise DataError("cannot fit on an empty dataset")
    if init is not None:
        fcfg = init.feature_config
        weights = init.weights.copy()
        bias = init.bias.copy()
    else:
        fcfg = feature_config or FeatureConfig(max_tokens=cfg.max_input_length)
        weights = np.zeros((N_CLASSES, fcfg.dim), dtype=np.float64)
        bias = np.zeros(N_CLASSES, dtype=np.float64)

    feats = [featurize(post.text, fcfg) for post in ds.posts]
    y = np.array([post.label.value for post in ds.posts], dtype=np.int64)
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    lr = cfg.learning_rate
    l2 = cfg.l2_penalty
    adam = cfg.optimizer is Optimizer.ADAM
    if adam:
        m_w = np.zeros_like(weights)
        v_w = np.zeros_like(weights)
        m_b = np.zeros_like(bias)
        v_b = np.zeros_like(bias)
        step = 0

    for epoch in range(cfg.epochs):
        perm = rng.permutation(len(feats))
        for start in range(0, len(perm), cfg.batch_size):
            batch = perm[start : start + cfg.batch_size]
            batch_feats = [feats[i] for i in batch]
            batch_y = y[batch]
            logits = _batch_logits(weights, bias, batch_feats)
            logp = _log_probs(logits)
            batch_loss = float(-logp[np.arange(len(batch)), batch_y].mean())
            if not np.isfinite(batch_loss):
                raise TrainingError(
                    f"non-finite training loss in epoch {epoch + 1}, "
                    f"batch {start // cfg.batch_size + 1}"
                )
            g = np.exp(logp)
            g[np.arange(len(batch)), batch_y] -= 1.0
            g /= len(batch)
            if adam:
                grad_w = l2 * weights
                for f, gi in zip(batch_feats, g):
                    grad_w[:, f.indices] += np.outer(gi, f.values)
                grad_b = g.sum(axis=0)
                step += 1
                m_w = _ADAM_BETA1 * m_w + (1 - _ADAM_BETA1) * grad_w
                v_w = _ADAM_BETA2 * v_w + (1 - _ADAM_BETA2) * grad_w**2
                m_b = _ADAM_BETA1 * m_b + (1 - _ADAM_BETA1) * grad_b
                v_b = _ADAM_BETA2 * v_b + (1 - _ADAM_BETA2) * grad_b**2
                bc1 = 1 - _ADAM_BETA1**step
                bc2 = 1 - _ADAM_BETA2**step
                weights -= lr * (m_w / bc1) / (np.sqrt(v_w / bc2) + _ADAM_EPS)
                bias -= lr * (m_b / bc1) / (np.sqrt(v_b / bc2) + _ADAM_EPS)
            else:
                if l2 > 0:
                    weights *= 1.0 - lr * l2
                for f, gi in zip(batch_feats, g):
                    weights[:, f.indices] -= lr * np.outer(gi, f.values)
                bias -= lr * g.sum(axis=0)

    return LinearModel(weights, bias, fcfg)


def predict_logits(model: LinearModel, texts: Sequence[str]) -> np.ndarray:
    """Raw pre-softmax scores, one (3,) row per text, order preserved."""
    if not texts:
        return np.zeros((0, N_CLASSES), dtype=np.float64)
    return np.stack(
        [model.logits_for(featurize(t, model.feature_config)) for t in texts]
    )


def predict_labels(model: LinearModel, texts: Sequence[str]) -> list[SeverityLabel]:
    logits = predict_logits(model, texts)
    return [LABELS[i] for i in np.argmax(logits, axis=1)]


def dataset_loss(model: LinearModel, ds: Dataset, l2_penalty: float = 0.0) -> float:
    """Mean cross-entropy on a labeled dataset plus the L2 penalty term."""
    if len(ds) == 0:
        raise DataError("dataset_loss requires a non-empty dataset")
    if ds.kind is not DatasetKind.LABELED:
        raise DataError("dataset_loss requires a labeled dataset")
    feats = [featurize(post.text, model.feature_config) for post in ds.posts]
    y = np.array([post.label.value for post in ds.posts], dtype=np.int64)
    logp = _log_probs(_batch_logits(model.weights, model.bias, feats))
    loss = float(-logp[np.arange(len(feats)), y].mean())
    return loss + 0.5 * l2_penalty * float((model.weights**2).sum())


def save_model(model: LinearModel, path: Union[str, Path]) -> None:
    """Write the versioned binary container (JSON header + zlib blobs)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    weights_blob = zlib.compress(model.weights.astype("<f8").tobytes(), 6)
    bias_blob = zlib.compress(model.bias.astype("<f8").tobytes(), 6)
    header = {
        "format": MODEL_FORMAT,
        "format_version": MODEL_FORMAT_VERSION,
        "classes": [label.to_string() for label in LABELS],
        "feature": model.feature_config.to_json(),
        "dtype": "<f8",
        "compression": "zlib",
        "weights_shape": [N_CLASSES, model.feature_config.dim],
        "blob_bytes": [len(weights_blob), len(bias_blob)],
    }
    with open(path, "wb") as handle:
        handle.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        handle.write(b"\n")
        handle.write(weights_blob)
        handle.write(bias_blob)


def load_model(path: Union[str, Path]) -> LinearModel:
    """Load a model container; refuses mismatched formats or versions."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"model file not found: {path}")
    with open(path, "rb") as handle:
        header_line = handle.readline()
        payload = handle.read()
    try:
        header = json.loads(header_line)
    except json.JSONDecodeError:
        raise DataError(f"{path}: not a model file (bad header)") from None
    if header.get("format") != MODEL_FORMAT:
        raise DataError(f"{path}: unknown model format {header.get('format')!r}")
    if header.get("format_version") != MODEL_FORMAT_VERSION:
        raise DataError(
            f"{path}: unsupported model format version "
            f"{header.get('format_version')!r} (expected {MODEL_FORMAT_VERSION})"
        )
    expected_classes = [label.to_string() for label in LABELS]
    if header.get("classes") != expected_classes:
        raise DataError(f"{path}: unexpected class order {header.get('classes')!r}")
    n_weights, n_bias = header["blob_bytes"]
    if len(payload) != n_weights + n_bias:
        raise DataError(f"{path}: truncated model file")
    fcfg = FeatureConfig.from_json(header["feature"])
    weights = np.frombuffer(zlib.decompress(payload[:n_weights]), dtype="<f8")
    weights = weights.reshape(header["weights_shape"]).astype(np.float64)
    bias = np.frombuffer(zlib.decompress(payload[n_weights:]), dtype="<f8")
    bias = bias.astype(np.float64)
    if weights.shape != (N_CLASSES, fcfg.dim) or bias.shape != (N_CLASSES,):
        raise DataError(f"{path}: model shapes do not match the feature config")
    return LinearModel(weights, bias, fcfg)
