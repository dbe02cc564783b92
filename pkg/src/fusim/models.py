"""Small MLP classifier with deterministic seeded SGD training.

The unlearning machinery only sees flat parameter vectors, so the model
is deliberately simple: dense layers with ReLU, softmax cross-entropy,
shuffled mini-batch SGD with a constant learning rate and no momentum.
Internal math runs in float64; results are cast to float32 at the
ParamVector boundary.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .params import Layout, ParamVector, from_tensors


class TrainingDivergenceError(RuntimeError):
    def __init__(self, epoch: int):
        super().__init__(f"training loss became non-finite during epoch {epoch}")
        self.epoch = epoch


_F32_MAX = float(np.finfo(np.float32).max)


def _fits_float32(a: np.ndarray) -> bool:
    # Internal math is float64; the ParamVector boundary is float32, so a
    # weight that overflows the cast counts as divergence too.
    return bool(np.isfinite(a).all()) and float(np.abs(a).max(initial=0.0)) <= _F32_MAX


@dataclass(frozen=True)
class MLPSpec:
    feature_dim: int
    num_classes: int
    hidden: tuple[int, ...] = (32,)

    def __post_init__(self) -> None:
        if self.feature_dim < 1 or self.num_classes < 2:
            raise ValueError("need feature_dim >= 1 and num_classes >= 2")
        if any(h < 1 for h in self.hidden):
            raise ValueError("hidden widths must be positive")

    def layout(self) -> Layout:
        dims = (self.feature_dim, *self.hidden, self.num_classes)
        entries = []
        for i in range(len(dims) - 1):
            entries.append((f"layer{i}.weight", (dims[i], dims[i + 1])))
            entries.append((f"layer{i}.bias", (dims[i + 1],)))
        return tuple(entries)

    @property
    def dim(self) -> int:
        dims = (self.feature_dim, *self.hidden, self.num_classes)
        return sum(dims[i] * dims[i + 1] + dims[i + 1] for i in range(len(dims) - 1))


def init_params(spec: MLPSpec, rng: np.random.Generator) -> ParamVector:
    """Uniform +/- 1/sqrt(fan_in) init drawn layer by layer from one stream."""
    tensors: dict[str, np.ndarray] = {}
    dims = (spec.feature_dim, *spec.hidden, spec.num_classes)
    for i in range(len(dims) - 1):
        bound = 1.0 / np.sqrt(dims[i])
        tensors[f"layer{i}.weight"] = rng.uniform(-bound, bound, size=(dims[i], dims[i + 1]))
        tensors[f"layer{i}.bias"] = rng.uniform(-bound, bound, size=(dims[i + 1],))
    return from_tensors(tensors, spec.layout())


def _unpack(params: ParamVector) -> list[tuple[np.ndarray, np.ndarray]]:
    tensors = params.tensors()
    n_layers = len(params.layout) // 2
    return [
        (tensors[f"layer{i}.weight"].astype(np.float64), tensors[f"layer{i}.bias"].astype(np.float64))
        for i in range(n_layers)
    ]


def _forward(layers, x: np.ndarray):
    """Returns (activations per layer, logits). x is (n, feature_dim) float64."""
    acts = [x]
    h = x
    for i, (w, b) in enumerate(layers):
        z = h @ w + b
        h = z if i == len(layers) - 1 else np.maximum(z, 0.0)
        acts.append(h)
    return acts, acts[-1]


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def train_local(
    start_params: ParamVector,
    data: Dataset,
    epochs: int,
    learning_rate: float,
    batch_size: int,
    seed,
) -> ParamVector:
    """Mini-batch SGD on softmax cross-entropy; pure function of its inputs.

    epochs = 0 (or learning_rate = 0) returns start_params unchanged.
    Raises TrainingDivergenceError naming the epoch if the loss goes NaN.
    """
    if epochs < 0:
        raise ValueError("epochs must be >= 0")
    if len(data) == 0:
        raise ValueError("cannot train on an empty dataset")
    if epochs == 0 or learning_rate == 0.0:
        return start_params
    rng = np.random.default_rng(seed)
    layers = _unpack(start_params)
    x_all = data.features.astype(np.float64)
    y_all = data.labels
    n = len(data)
    for epoch in range(1, epochs + 1):
        order = rng.permutation(n)
        for lo in range(0, n, batch_size):
            idx = order[lo : lo + batch_size]
            x, y = x_all[idx], y_all[idx]
            acts, logits = _forward(layers, x)
            logp = _log_softmax(logits)
            if not np.isfinite(logp[np.arange(len(y)), y]).all():
                raise TrainingDivergenceError(epoch)
            # Softmax cross-entropy backward pass.
            grad = np.exp(logp)
            grad[np.arange(len(y)), y] -= 1.0
            grad /= len(y)
            for i in range(len(layers) - 1, -1, -1):
                w, b = layers[i]
                gw = acts[i].T @ grad
                gb = grad.sum(axis=0)
                if i > 0:
                    grad = (grad @ w.T) * (acts[i] > 0)
                layers[i] = (w - learning_rate * gw, b - learning_rate * gb)
        if any(not (_fits_float32(w) and _fits_float32(b)) for w, b in layers):
            raise TrainingDivergenceError(epoch)
    tensors = {}
    for i, (w, b) in enumerate(layers):
        tensors[f"layer{i}.weight"] = w
        tensors[f"layer{i}.bias"] = b
    return from_tensors(tensors, start_params.layout)


def evaluate(params: ParamVector, data: Dataset) -> tuple[float, float, np.ndarray]:
    """(accuracy, mean cross-entropy loss, per-sample losses)."""
    if len(data) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    layers = _unpack(params)
    _, logits = _forward(layers, data.features.astype(np.float64))
    logp = _log_softmax(logits)
    losses = -logp[np.arange(len(data)), data.labels]
    preds = np.argmax(logits, axis=1)
    accuracy = float(np.mean(preds == data.labels))
    return accuracy, float(losses.mean()), losses
