"""Fully connected networks in numpy: layouts, forward/backward passes, Adam and checkpoints."""
import dataclasses
import logging
import struct
from pathlib import Path
from typing import List, Optional, Tuple

import arrow
import numpy as np

from wsiqa import prop
from wsiqa.config import create_output, parse_input, read_json, write_json
from wsiqa.schema import ModelMetadataFields

LOGGER = logging.getLogger(__name__)

MAGIC = b"IQNN"
FORMAT_VERSION = 1
ACTIVATIONS = {"linear": 0, "relu": 1}
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPSILON = 1e-8

MTL_HIDDEN = ((512, 0.25), (256, 0.5))
REGRESSOR_HIDDEN = ((2048, 0.25), (1024, 0.25), (256, 0.5))


class ModelError(prop.ValidationError):
    pass


class StaleCacheError(ModelError):
    pass


@dataclasses.dataclass(frozen=True)
class NetworkLayout:
    input_dim: int
    hidden: Tuple[Tuple[int, float], ...]
    heads: int = 1

    def __post_init__(self):
        if self.input_dim <= 0:
            raise ModelError(f"Input dimension must be positive, got {self.input_dim}")

        if self.heads < 1:
            raise ModelError(f"A network needs at least one head, got {self.heads}")

        for units, rate in self.hidden:
            if units <= 0 or not 0.0 <= rate < 1.0:
                raise ModelError(f"Invalid hidden layer ({units} units, dropout {rate})")

    def head_dims(self):
        return [self.input_dim] + [units for units, _ in self.hidden] + [1]


def regressor_layout(input_dim):
    return NetworkLayout(input_dim, REGRESSOR_HIDDEN, 1)


def mtl_head_layout(input_dim, tasks):
    return NetworkLayout(input_dim, MTL_HIDDEN, tasks)


def parameter_count(layout):
    dims = layout.head_dims()
    return layout.heads * sum(n_in * n_out + n_out for n_in, n_out in zip(dims[:-1], dims[1:]))


@dataclasses.dataclass
class Layer:
    weights: np.ndarray
    bias: np.ndarray
    activation: str = "linear"
    dropout: float = 0.0

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64).ravel()

        if self.weights.ndim != 2 or self.weights.shape[1] != self.bias.size:
            raise ModelError(f"Weights {self.weights.shape} do not match bias of length {self.bias.size}")

        if self.activation not in ACTIVATIONS:
            raise ModelError(f"Unknown activation {self.activation!r}")

        if not 0.0 <= self.dropout < 1.0:
            raise ModelError(f"Dropout rate must be in [0, 1), got {self.dropout}")

    @property
    def fan_in(self):
        return self.weights.shape[0]

    @property
    def fan_out(self):
        return self.weights.shape[1]


class NetworkModel:
    """One or more heads reading the same input; every head ends in a single linear neuron."""

    def __init__(self, heads, architecture="regressor", tasks=None):
        self.heads = [list(head) for head in heads]
        self.architecture = architecture
        self.tasks = list(tasks) if tasks is not None else [f"task_{k}" for k in range(len(self.heads))]
        self.version = 0

        if not self.heads or any(not head for head in self.heads):
            raise ModelError("Every head needs at least one layer")

        if len(self.tasks) != len(self.heads):
            raise ModelError(f"{len(self.tasks)} task names for {len(self.heads)} heads")

        input_dims = {head[0].fan_in for head in self.heads}
        if len(input_dims) != 1:
            raise ModelError(f"Heads disagree on the input dimension: {sorted(input_dims)}")

        for head in self.heads:
            for previous, layer in zip(head[:-1], head[1:]):
                if previous.fan_out != layer.fan_in:
                    raise ModelError(f"Layer of width {previous.fan_out} feeds a layer expecting {layer.fan_in}")
            if head[-1].fan_out != 1:
                raise ModelError(f"Heads must end in one output neuron, got {head[-1].fan_out}")

    @property
    def input_dim(self):
        return self.heads[0][0].fan_in

    def parameters(self):
        return [array for head in self.heads for layer in head for array in (layer.weights, layer.bias)]

    def set_parameters(self, arrays):
        arrays = list(arrays)
        position = 0
        for head in self.heads:
            for layer in head:
                layer.weights, layer.bias = arrays[position], arrays[position + 1]
                position += 2
        self.version += 1

    def copy(self):
        clone = NetworkModel(
            [[dataclasses.replace(layer, weights=layer.weights.copy(), bias=layer.bias.copy()) for layer in head]
             for head in self.heads],
            self.architecture,
            self.tasks,
        )
        return clone

    def parameter_count(self):
        return sum(array.size for array in self.parameters())


def build_model(layout, seed=0, architecture="regressor", tasks=None):
    """He-normal weights, zero biases, all drawn from one generator seeded with ``seed``."""
    rng = np.random.default_rng(seed)
    dims = layout.head_dims()
    rates = [rate for _, rate in layout.hidden] + [0.0]
    heads = []

    for _ in range(layout.heads):
        head = []
        for position, (n_in, n_out) in enumerate(zip(dims[:-1], dims[1:])):
            last = position == len(dims) - 2
            head.append(Layer(
                weights=rng.normal(0.0, np.sqrt(2.0 / n_in), size=(n_in, n_out)),
                bias=np.zeros(n_out),
                activation="linear" if last else "relu",
                dropout=rates[position],
            ))
        heads.append(head)

    LOGGER.debug("Built %s network: %d head(s), dims %s", architecture, layout.heads, dims)
    return NetworkModel(heads, architecture, tasks)


def build_mtl_head(input_dim, tasks, seed=0):
    names = list(tasks) if not isinstance(tasks, int) else [f"task_{k}" for k in range(tasks)]
    return build_model(mtl_head_layout(input_dim, len(names)), seed, "mtl", names)


def build_regressor(input_dim, seed=0):
    return build_model(regressor_layout(input_dim), seed, "regressor", ["quality"])


@dataclasses.dataclass
class ForwardCache:
    model_id: int
    version: int
    # per head, per layer: (layer input, pre-activation, dropout mask or None)
    steps: List[List[Tuple[np.ndarray, np.ndarray, Optional[np.ndarray]]]]


def _activate(z, activation):
    return np.maximum(z, 0.0) if activation == "relu" else z


def forward(model, batch, mode="eval", seed=None, dropout=True):
    """Returns predictions of shape (N, heads) and the cache needed by ``backward``."""
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim == 1:
        batch = batch[np.newaxis, :]

    if batch.shape[1] != model.input_dim:
        raise ModelError(f"Batch has {batch.shape[1]} features, model expects {model.input_dim}")

    if mode not in ("train", "eval"):
        raise ModelError(f"Mode must be 'train' or 'eval', got {mode!r}")

    rng = np.random.default_rng(seed) if mode == "train" and dropout else None
    outputs = []
    steps = []

    for head in model.heads:
        activations = batch
        head_steps = []
        for layer in head:
            z = activations @ layer.weights + layer.bias
            out = _activate(z, layer.activation)
            mask = None
            if rng is not None and layer.dropout > 0:
                mask = (rng.random(out.shape) >= layer.dropout) / (1.0 - layer.dropout)
                out = out * mask
            head_steps.append((activations, z, mask))
            activations = out
        outputs.append(activations[:, 0])
        steps.append(head_steps)

    return np.stack(outputs, axis=1), ForwardCache(id(model), model.version, steps)


def predict(model, features):
    return forward(model, features, mode="eval")[0]


def backward(model, cache, grad_output):
    """Parameter gradients in ``model.parameters()`` order for dL/d(predictions) of shape (N, heads)."""
    if cache.model_id != id(model) or cache.version != model.version:
        raise StaleCacheError("The forward cache does not belong to the current model parameters")

    grad_output = np.asarray(grad_output, dtype=np.float64)
    if grad_output.ndim == 1:
        grad_output = grad_output[:, np.newaxis]

    gradients = []
    for head_index, (head, head_steps) in enumerate(zip(model.heads, cache.steps)):
        delta = grad_output[:, head_index:head_index + 1]
        head_gradients = []

        for layer, (inputs, z, mask) in zip(reversed(head), reversed(head_steps)):
            if mask is not None:
                delta = delta * mask
            if layer.activation == "relu":
                delta = delta * (z > 0)
            head_gradients.append((inputs.T @ delta, delta.sum(axis=0)))
            delta = delta @ layer.weights.T

        for grad_w, grad_b in reversed(head_gradients):
            gradients.extend((grad_w, grad_b))

    return gradients


@dataclasses.dataclass
class AdamState:
    first: List[np.ndarray]
    second: List[np.ndarray]
    step: int = 0
    beta1: float = ADAM_BETA1
    beta2: float = ADAM_BETA2
    epsilon: float = ADAM_EPSILON

    @classmethod
    def for_parameters(cls, params):
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])


def adam_step(state, params, grads, learning_rate):
    """Bias-corrected Adam; returns the new parameters and advances ``state`` in place."""
    if len(params) != len(grads) or len(params) != len(state.first):
        raise ModelError(f"Adam got {len(params)} parameters, {len(grads)} gradients, {len(state.first)} moments")

    state.step += 1
    correction1 = 1.0 - state.beta1 ** state.step
    correction2 = 1.0 - state.beta2 ** state.step
    updated = []

    for k, (param, grad) in enumerate(zip(params, grads)):
        if param.shape != grad.shape:
            raise ModelError(f"Gradient shape {grad.shape} does not match parameter shape {param.shape}")

        state.first[k] = state.beta1 * state.first[k] + (1.0 - state.beta1) * grad
        state.second[k] = state.beta2 * state.second[k] + (1.0 - state.beta2) * grad * grad
        m_hat = state.first[k] / correction1
        v_hat = state.second[k] / correction2
        updated.append(param - learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon))

    return updated


def metadata_path(path):
    return Path(f"{path}.json")


def save_model(model, path, metadata):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    with open(path, "wb") as handle:
        handle.write(MAGIC)
        handle.write(struct.pack("<II", FORMAT_VERSION, len(model.heads)))
        for head in model.heads:
            handle.write(struct.pack("<I", len(head)))
            for layer in head:
                handle.write(struct.pack("<IIBd", layer.fan_in, layer.fan_out,
                                         ACTIVATIONS[layer.activation], layer.dropout))
                handle.write(layer.weights.astype("<f8").tobytes())
                handle.write(layer.bias.astype("<f8").tobytes())

    body = dict(metadata)
    body.update({
        "format_version": FORMAT_VERSION,
        "architecture": model.architecture,
        "tasks": list(model.tasks),
        "created_at": body.get("created_at") or arrow.utcnow(),
    })
    write_json(metadata_path(path), create_output(body, ModelMetadataFields().all()))
    LOGGER.info("Saved %s model (%d parameters) to %s", model.architecture, model.parameter_count(), path)


def _unpack(handle, fmt, path):
    size = struct.calcsize(fmt)
    offset = handle.tell()
    chunk = handle.read(size)
    if len(chunk) != size:
        raise ModelError(f"{path} is truncated at byte {offset}")
    return struct.unpack(fmt, chunk)


def _read_floats(handle, count, path):
    offset = handle.tell()
    chunk = handle.read(count * 8)
    if len(chunk) != count * 8:
        raise ModelError(f"{path} is truncated at byte {offset}")
    return np.frombuffer(chunk, dtype="<f8").astype(np.float64)


def load_model(path):
    """Returns the model and its validated metadata."""
    codes = {code: name for name, code in ACTIVATIONS.items()}

    with open(path, "rb") as handle:
        magic = handle.read(4)
        if magic != MAGIC:
            raise ModelError(f"{path} is not a model checkpoint (magic {magic!r} at byte 0)")

        version, head_count = _unpack(handle, "<II", path)
        if version != FORMAT_VERSION:
            raise ModelError(f"{path} has checkpoint version {version}, expected {FORMAT_VERSION}")

        heads = []
        for _ in range(head_count):
            (layer_count,) = _unpack(handle, "<I", path)
            head = []
            for _ in range(layer_count):
                fan_in, fan_out, code, rate = _unpack(handle, "<IIBd", path)
                if code not in codes:
                    raise ModelError(f"{path} has unknown activation code {code}")
                weights = _read_floats(handle, fan_in * fan_out, path).reshape(fan_in, fan_out)
                bias = _read_floats(handle, fan_out, path)
                head.append(Layer(weights, bias, codes[code], rate))
            heads.append(head)

        if handle.read(1):
            raise ModelError(f"{path} has trailing bytes after the last layer")

    try:
        metadata = parse_input(read_json(metadata_path(path)), ModelMetadataFields().all())
    except (OSError, ValueError) as error:
        raise ModelError(f"Model metadata {metadata_path(path)} is invalid: {getattr(error, 'message', error)}") \
            from error

    model = NetworkModel(heads, metadata["architecture"], metadata["tasks"])
    return model, metadata
