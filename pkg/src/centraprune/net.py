"""A small dense network with softmax head, trained by plain mini-batch SGD.

Layers follow the column convention of :class:`LayerBundle`: a batch ``x``
of shape [batch, d] maps to ``act(x @ W + b)`` of shape [batch, n].
"""

from __future__ import annotations

import copy
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    EmptyDataset,
    InvalidConfig,
    MissingFile,
    NonFiniteLoss,
    ShapeMismatch,
    UnknownLayer,
)
from .prune import PrunePlan, apply_plan, dense_preactivation, slice_downstream
from .tensor_io import Dataset, LayerBundle, commit_files, dump_json, layer_files, read_json, read_layer

MODEL_MANIFEST = "model.json"


@dataclass
class MlpModel:
    layers: list[LayerBundle]
    head: LayerBundle
    rng_seed: int = 0

    def __post_init__(self) -> None:
        chain = self.layers + [self.head]
        for prev, nxt in zip(chain, chain[1:]):
            if prev.n != nxt.d:
                raise ShapeMismatch(f"layer {prev.name!r} outputs {prev.n} units but {nxt.name!r} expects {nxt.d}")
        if self.head.activation != "softmax":
            raise ShapeMismatch("head layer must use softmax")
        for layer in self.layers:
            if layer.activation not in ("relu", "linear"):
                raise ShapeMismatch(f"hidden layer {layer.name!r} has activation {layer.activation!r}")
        names = [layer.name for layer in chain]
        if len(set(names)) != len(names):
            raise ShapeMismatch(f"layer names must be unique, got {names}")

    @property
    def all_layers(self) -> list[LayerBundle]:
        return self.layers + [self.head]

    @property
    def input_dim(self) -> int:
        return self.all_layers[0].d

    @property
    def num_classes(self) -> int:
        return self.head.n

    @property
    def num_params(self) -> int:
        return sum(layer.num_params for layer in self.all_layers)

    def layer_index(self, name: str) -> int:
        for i, layer in enumerate(self.all_layers):
            if layer.name == name:
                return i
        raise UnknownLayer(f"no layer named {name!r}; have {[l.name for l in self.all_layers]}")

    def copy(self) -> "MlpModel":
        return copy.deepcopy(self)


@dataclass
class TrainConfig:
    epochs: int = 50
    batch_size: int = 32
    learning_rate: float = 0.1
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.epochs < 0 or self.batch_size < 1 or not self.learning_rate >= 0 or self.rng_seed < 0:
            raise InvalidConfig(f"invalid training config {self}")


@dataclass
class TrainResult:
    model: MlpModel
    loss_history: list[float] = field(default_factory=list)


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def init_model(
    input_dim: int,
    hidden: list[int],
    num_classes: int,
    seed: int = 0,
    activation: str = "relu",
) -> MlpModel:
    """Glorot-uniform weights from ``np.random.default_rng(seed)``, zero biases."""
    rng = np.random.default_rng(seed)
    dims = [input_dim, *hidden]
    layers = [
        LayerBundle(glorot_uniform(rng, a, b), np.zeros(b), name=f"dense_{i}", activation=activation)
        for i, (a, b) in enumerate(zip(dims, dims[1:]))
    ]
    head = LayerBundle(glorot_uniform(rng, dims[-1], num_classes), np.zeros(num_classes), name="head", activation="softmax")
    return MlpModel(layers, head, rng_seed=seed)


def _act(z: np.ndarray, kind: str) -> np.ndarray:
    return np.maximum(z, 0.0) if kind == "relu" else z


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _check_input(m: MlpModel, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != m.input_dim:
        raise ShapeMismatch(f"expected inputs of shape [batch, {m.input_dim}], got {x.shape}")
    return x


def hidden_states(m: MlpModel, x: np.ndarray) -> tuple[list[np.ndarray], list[np.ndarray], np.ndarray]:
    """Return (pre-activations, activations) per hidden layer, plus head logits."""
    h = _check_input(m, x)
    pre, post = [], []
    for layer in m.layers:
        z = dense_preactivation(h, layer.weights, layer.bias)
        h = _act(z, layer.activation)
        pre.append(z)
        post.append(h)
    return pre, post, dense_preactivation(h, m.head.weights, m.head.bias)


def logits(m: MlpModel, x: np.ndarray) -> np.ndarray:
    return hidden_states(m, x)[2]


def forward(m: MlpModel, x: np.ndarray) -> np.ndarray:
    """Class probabilities, one row per input row."""
    return softmax(logits(m, x))


def cross_entropy(probs: np.ndarray, y: np.ndarray) -> float:
    picked = probs[np.arange(y.shape[0]), y]
    return float(-np.mean(np.log(np.maximum(picked, 1e-300))))


def loss_and_grads(m: MlpModel, x: np.ndarray, y: np.ndarray) -> tuple[float, list[tuple[np.ndarray, np.ndarray]]]:
    """Mean cross-entropy and its gradient w.r.t. (weights, bias) of every layer."""
    x = _check_input(m, x)
    y = np.asarray(y, dtype=np.int64)
    pre, post, z = hidden_states(m, x)
    probs = softmax(z)
    batch = x.shape[0]
    loss = cross_entropy(probs, y)

    delta = probs.copy()
    delta[np.arange(batch), y] -= 1.0
    delta /= batch
    inputs = [x] + post
    grads = []
    layers = m.all_layers
    for i in range(len(layers) - 1, -1, -1):
        a_in = inputs[i]
        grads.append((a_in.T @ delta, delta.sum(axis=0)))
        if i > 0:
            delta = delta @ layers[i].weights.T
            if layers[i - 1].activation == "relu":
                delta = delta * (pre[i - 1] > 0)
    grads.reverse()
    return loss, grads


def _all_finite(m: MlpModel) -> bool:
    return all(np.all(np.isfinite(l.weights)) and np.all(np.isfinite(l.bias)) for l in m.all_layers)


def _sgd_epochs(model: MlpModel, data: Dataset, cfg: TrainConfig, history: list[float]) -> None:
    rng = np.random.default_rng(cfg.rng_seed)
    n = len(data)
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            loss, grads = loss_and_grads(model, data.x[idx], data.y[idx])
            if not np.isfinite(loss):
                raise NonFiniteLoss(f"loss became {loss} in epoch {epoch} at batch offset {start}")
            for layer, (gw, gb) in zip(model.all_layers, grads):
                layer.weights -= cfg.learning_rate * gw
                layer.bias -= cfg.learning_rate * gb
        if not _all_finite(model):
            raise NonFiniteLoss(f"parameters became non-finite in epoch {epoch} (lr={cfg.learning_rate})")
        epoch_loss = cross_entropy(forward(model, data.x), data.y)
        if not np.isfinite(epoch_loss):
            raise NonFiniteLoss(f"training loss is {epoch_loss} after epoch {epoch}")
        history.append(epoch_loss)


def train(m: MlpModel, data: Dataset, cfg: TrainConfig) -> TrainResult:
    """Mini-batch SGD on mean cross-entropy; the input model is left untouched.

    Batches come from a per-epoch permutation drawn from
    ``np.random.default_rng(cfg.rng_seed)``. ``loss_history[e]`` is the full
    training-set loss after epoch ``e``.
    """
    if len(data) == 0:
        raise EmptyDataset("cannot train on an empty dataset")
    if data.x.shape[1] != m.input_dim:
        raise ShapeMismatch(f"dataset has {data.x.shape[1]} features, model expects {m.input_dim}")
    if data.num_classes != m.num_classes:
        raise ShapeMismatch(f"dataset has {data.num_classes} classes, model head has {m.num_classes}")
    model = m.copy()
    history: list[float] = []
    with np.errstate(over="ignore", invalid="ignore"):
        _sgd_epochs(model, data, cfg, history)
    return TrainResult(model, history)


def predict(m: MlpModel, x: np.ndarray) -> np.ndarray:
    # np.argmax returns the first maximum, i.e. the lowest class index on ties
    return np.argmax(forward(m, x), axis=1)


def evaluate(m: MlpModel, data: Dataset) -> float:
    """Top-1 accuracy."""
    if len(data) == 0:
        raise EmptyDataset("cannot evaluate on an empty dataset")
    return float(np.mean(predict(m, data.x) == data.y))


def rebuild_with_plan(m: MlpModel, layer_name: str, plan: PrunePlan) -> MlpModel:
    """Replace the named hidden layer by its pruned version and slice its consumer."""
    idx = m.layer_index(layer_name)
    if idx == len(m.layers):
        raise UnknownLayer(f"{layer_name!r} is the classification head; only hidden layers can be pruned")
    layer = m.layers[idx]
    pruned = apply_plan(layer, plan).bundle(layer.name, layer.activation)
    consumer = m.all_layers[idx + 1]
    sliced = LayerBundle(slice_downstream(consumer.weights, plan), consumer.bias.copy(), consumer.name, consumer.activation)
    layers = [l if i != idx else pruned for i, l in enumerate(m.layers)]
    layers = [copy.deepcopy(l) for l in layers]
    if idx + 1 < len(m.layers):
        layers[idx + 1] = sliced
        head = copy.deepcopy(m.head)
    else:
        head = sliced
    return MlpModel(layers, head, m.rng_seed)


def model_files(m: MlpModel) -> dict[str, bytes]:
    files: dict[str, bytes] = {}
    for layer in m.all_layers:
        files.update(layer_files(layer, prefix=f"{layer.name}/"))
    manifest = {"layers": [l.name for l in m.layers], "head": m.head.name, "rng_seed": m.rng_seed}
    files[MODEL_MANIFEST] = dump_json(manifest).encode("utf-8")
    return files


def save_model(directory: str | os.PathLike, m: MlpModel) -> None:
    commit_files(directory, model_files(m))


def load_model(directory: str | os.PathLike) -> MlpModel:
    directory = Path(directory)
    if not (directory / MODEL_MANIFEST).is_file():
        raise MissingFile(f"{directory} has no {MODEL_MANIFEST}")
    manifest = read_json(directory / MODEL_MANIFEST)
    layers = [read_layer(directory / name) for name in manifest["layers"]]
    head = read_layer(directory / manifest["head"])
    return MlpModel(layers, head, int(manifest.get("rng_seed", 0)))


# -- synthetic tasks ---------------------------------------------------------


def make_blobs(
    n_samples: int = 600,
    num_classes: int = 4,
    n_features: int = 8,
    spread: float = 1.0,
    seed: int = 0,
) -> Dataset:
    """Isotropic Gaussian blobs; centres uniform in [-4, 4]^n_features."""
    rng = np.random.default_rng(seed)
    centres = rng.uniform(-4.0, 4.0, size=(num_classes, n_features))
    y = np.arange(n_samples) % num_classes
    x = centres[y] + spread * rng.standard_normal((n_samples, n_features))
    perm = rng.permutation(n_samples)
    return Dataset(x[perm], y[perm], num_classes, name="blobs")


def make_rings(
    n_samples: int = 600,
    num_classes: int = 3,
    n_features: int = 2,
    noise: float = 0.15,
    seed: int = 0,
) -> Dataset:
    """Concentric rings in the first two features, class k at radius k + 1.

    Extra features, if any, are pure noise.
    """
    if n_features < 2:
        raise InvalidConfig("rings need at least two features")
    rng = np.random.default_rng(seed)
    y = np.arange(n_samples) % num_classes
    angle = rng.uniform(0.0, 2.0 * np.pi, size=n_samples)
    radius = (y + 1.0) + noise * rng.standard_normal(n_samples)
    x = noise * rng.standard_normal((n_samples, n_features))
    x[:, 0] = radius * np.cos(angle)
    x[:, 1] = radius * np.sin(angle)
    perm = rng.permutation(n_samples)
    return Dataset(x[perm], y[perm], num_classes, name="rings")


TASKS = {"blobs": make_blobs, "rings": make_rings}


def make_task(name: str, **kwargs) -> Dataset:
    if name not in TASKS:
        raise InvalidConfig(f"unknown task {name!r}; choose from {sorted(TASKS)}")
    return TASKS[name](**kwargs)


def train_val_split(data: Dataset, val_fraction: float = 0.25, seed: int = 0) -> tuple[Dataset, Dataset]:
    if not 0.0 < val_fraction < 1.0:
        raise InvalidConfig("val_fraction must lie in (0, 1)")
    perm = np.random.default_rng(seed).permutation(len(data))
    n_val = max(1, int(round(val_fraction * len(data))))
    return data.subset(np.sort(perm[n_val:])), data.subset(np.sort(perm[:n_val]))
