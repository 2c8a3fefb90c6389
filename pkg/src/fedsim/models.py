"""Model zoo: feature extractor + predictor head, and the conditional generator.

A model is split into a feature extractor mapping inputs of width D to latent
features of width d, and a predictor head mapping latents to class logits.
The generator maps ``concat(label, noise)`` to a latent of the same width d.

Layer weights are stored ``(in_dim, out_dim)`` so a forward pass is
``x @ W + b``. Any weight may be a plain array or a ``Tensor`` leaf; the
forward functions do not care, which is how training attaches gradients.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass
from typing import Mapping, Sequence, Union

import numpy as np

from .numerics import ShapeError, Tensor, clip, leaky_relu, log, mean, sigmoid, softmax
from .numerics.tensor import PROB_CLAMP, lift

ArrayLike = Union[np.ndarray, Tensor]


class TaskMode(str, enum.Enum):
    MULTICLASS = "multiclass"
    MULTILABEL = "multilabel"


@dataclass(frozen=True)
class DenseLayer:
    weight: ArrayLike
    bias: ArrayLike

    @property
    def in_dim(self) -> int:
        return self.weight.shape[0]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[1]

    @property
    def size(self) -> int:
        return self.in_dim * self.out_dim + self.out_dim


def _flatten(layers: Sequence[DenseLayer]) -> list:
    out = []
    for layer in layers:
        out.extend((layer.weight, layer.bias))
    return out


def _rebuild(layers: Sequence[DenseLayer], arrays: Sequence) -> tuple[DenseLayer, ...]:
    if len(arrays) != 2 * len(layers):
        raise ShapeError(f"expected {2 * len(layers)} arrays, got {len(arrays)}")
    rebuilt = []
    for i, layer in enumerate(layers):
        w, b = arrays[2 * i], arrays[2 * i + 1]
        if tuple(w.shape) != tuple(layer.weight.shape) or tuple(b.shape) != tuple(layer.bias.shape):
            raise ShapeError(f"layer {i}: shapes {w.shape}/{b.shape} do not match {layer.weight.shape}/{layer.bias.shape}")
        rebuilt.append(DenseLayer(w, b))
    return tuple(rebuilt)


def _check_chain(layers: Sequence[DenseLayer], what: str) -> None:
    if not layers:
        raise ShapeError(f"{what} needs at least one layer")
    for prev, nxt in zip(layers, layers[1:]):
        if prev.out_dim != nxt.in_dim:
            raise ShapeError(f"{what}: layer widths {prev.out_dim} -> {nxt.in_dim} do not chain")
    for layer in layers:
        if tuple(layer.bias.shape) != (layer.out_dim,):
            raise ShapeError(f"{what}: bias shape {layer.bias.shape} for output width {layer.out_dim}")


@dataclass(frozen=True)
class ModelParams:
    feature_extractor: tuple[DenseLayer, ...]
    predictor: tuple[DenseLayer, ...]

    def __post_init__(self):
        _check_chain(self.feature_extractor, "feature extractor")
        _check_chain(self.predictor, "predictor")
        if self.feature_extractor[-1].out_dim != self.predictor[0].in_dim:
            raise ShapeError(
                f"latent width mismatch: extractor emits {self.feature_extractor[-1].out_dim}, "
                f"predictor expects {self.predictor[0].in_dim}"
            )
        if self.latent_dim >= self.input_dim:
            raise ShapeError(f"latent dim {self.latent_dim} must be smaller than input dim {self.input_dim}")

    @property
    def input_dim(self) -> int:
        return self.feature_extractor[0].in_dim

    @property
    def latent_dim(self) -> int:
        return self.predictor[0].in_dim

    @property
    def num_classes(self) -> int:
        return self.predictor[-1].out_dim

    @property
    def num_params(self) -> int:
        return sum(l.size for l in self.feature_extractor) + self.predictor_num_params

    @property
    def predictor_num_params(self) -> int:
        return sum(l.size for l in self.predictor)

    def arrays(self) -> list:
        return _flatten(self.feature_extractor) + _flatten(self.predictor)

    def with_arrays(self, arrays: Sequence) -> "ModelParams":
        n = 2 * len(self.feature_extractor)
        return ModelParams(_rebuild(self.feature_extractor, arrays[:n]), _rebuild(self.predictor, arrays[n:]))

    def with_predictor(self, predictor: Sequence[DenseLayer]) -> "ModelParams":
        return ModelParams(self.feature_extractor, tuple(predictor))

    def to_bytes(self) -> bytes:
        return layers_to_bytes(self.feature_extractor) + layers_to_bytes(self.predictor)

    @classmethod
    def from_bytes(cls, blob: bytes) -> "ModelParams":
        extractor, used = layers_from_bytes(blob)
        predictor, used2 = layers_from_bytes(blob[used:])
        if used + used2 != len(blob):
            raise ValueError("trailing bytes after model parameters")
        return cls(extractor, predictor)


@dataclass(frozen=True)
class GeneratorParams:
    layers: tuple[DenseLayer, ...]
    num_classes: int
    noise_dim: int

    def __post_init__(self):
        _check_chain(self.layers, "generator")
        if self.layers[0].in_dim != self.num_classes + self.noise_dim:
            raise ShapeError(
                f"generator input width {self.layers[0].in_dim} != classes {self.num_classes} + noise {self.noise_dim}"
            )

    @property
    def latent_dim(self) -> int:
        return self.layers[-1].out_dim

    @property
    def num_params(self) -> int:
        return sum(l.size for l in self.layers)

    def arrays(self) -> list:
        return _flatten(self.layers)

    def with_arrays(self, arrays: Sequence) -> "GeneratorParams":
        return GeneratorParams(_rebuild(self.layers, arrays), self.num_classes, self.noise_dim)

    def to_bytes(self) -> bytes:
        return layers_to_bytes(self.layers)

    @classmethod
    def from_bytes(cls, blob: bytes, num_classes: int) -> "GeneratorParams":
        layers, used = layers_from_bytes(blob)
        if used != len(blob):
            raise ValueError("trailing bytes after generator parameters")
        return cls(layers, num_classes, layers[0].in_dim - num_classes)


def predictor_size(layers: Sequence[DenseLayer]) -> int:
    return sum(l.size for l in layers)


# Binary layout of a layer stack, all little-endian:
#   u32 layer_count
#   u32 in_dim, u32 out_dim            (repeated layer_count times)
#   f32 weight[in_dim*out_dim] row-major, f32 bias[out_dim]   (per layer)
# ModelParams are the extractor stack followed by the predictor stack.


def layers_to_bytes(layers: Sequence[DenseLayer]) -> bytes:
    parts = [struct.pack("<I", len(layers))]
    for layer in layers:
        parts.append(struct.pack("<II", layer.in_dim, layer.out_dim))
    for layer in layers:
        w = np.asarray(lift(layer.weight).data, dtype="<f4")
        b = np.asarray(lift(layer.bias).data, dtype="<f4")
        parts.append(np.ascontiguousarray(w).tobytes())
        parts.append(b.tobytes())
    return b"".join(parts)


def layers_from_bytes(blob: bytes) -> tuple[tuple[DenseLayer, ...], int]:
    """Decode one layer stack; returns the layers and the bytes consumed."""
    if len(blob) < 4:
        raise ValueError("truncated layer header")
    (count,) = struct.unpack_from("<I", blob, 0)
    offset = 4
    if len(blob) < offset + 8 * count:
        raise ValueError("truncated layer shapes")
    shapes = [struct.unpack_from("<II", blob, offset + 8 * i) for i in range(count)]
    offset += 8 * count
    layers = []
    for fan_in, fan_out in shapes:
        n = fan_in * fan_out + fan_out
        if len(blob) < offset + 4 * n:
            raise ValueError("truncated layer values")
        flat = np.frombuffer(blob, dtype="<f4", count=n, offset=offset).astype(np.float64)
        offset += 4 * n
        layers.append(DenseLayer(flat[: fan_in * fan_out].reshape(fan_in, fan_out), flat[fan_in * fan_out :].copy()))
    return tuple(layers), offset


def _init_stack(widths: Sequence[int], rng: np.random.Generator) -> tuple[DenseLayer, ...]:
    layers = []
    for fan_in, fan_out in zip(widths, widths[1:]):
        w = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out))
        layers.append(DenseLayer(w, np.zeros(fan_out)))
    return tuple(layers)


def init_model(
    input_dim: int,
    num_classes: int,
    rng: np.random.Generator,
    latent_dim: int = 16,
    hidden: Sequence[int] = (64, 64),
    predictor_hidden: Sequence[int] = (),
) -> ModelParams:
    extractor = _init_stack([input_dim, *hidden, latent_dim], rng)
    predictor = _init_stack([latent_dim, *predictor_hidden, num_classes], rng)
    return ModelParams(extractor, predictor)


def init_generator(
    num_classes: int,
    latent_dim: int,
    rng: np.random.Generator,
    noise_dim: int = 8,
    hidden: Sequence[int] = (64,),
) -> GeneratorParams:
    return GeneratorParams(_init_stack([num_classes + noise_dim, *hidden, latent_dim], rng), num_classes, noise_dim)


def _mlp(x, layers: Sequence[DenseLayer]) -> Tensor:
    h = lift(x)
    if h.ndim != 2:
        raise ShapeError(f"expected a 2-D batch, got shape {h.shape}")
    if h.shape[1] != layers[0].in_dim:
        raise ShapeError(f"input width {h.shape[1]} != expected {layers[0].in_dim}")
    last = len(layers) - 1
    for i, layer in enumerate(layers):
        h = h @ layer.weight + layer.bias
        if i < last:
            h = leaky_relu(h)
    return h


def forward_features(x, extractor: Sequence[DenseLayer]) -> Tensor:
    return _mlp(x, extractor)


def predict_logits(z, predictor: Sequence[DenseLayer]) -> Tensor:
    return _mlp(z, predictor)


def activate(logits, mode: TaskMode) -> Tensor:
    return softmax(logits) if TaskMode(mode) is TaskMode.MULTICLASS else sigmoid(logits)


def predict_proba(z, predictor: Sequence[DenseLayer], mode: TaskMode) -> Tensor:
    return activate(predict_logits(z, predictor), mode)


def model_proba(x, params: ModelParams, mode: TaskMode) -> Tensor:
    return predict_proba(forward_features(x, params.feature_extractor), params.predictor, mode)


def generate_latent(y, noise, generator: GeneratorParams) -> Tensor:
    y = np.asarray(y, dtype=np.float64)
    noise = np.asarray(noise, dtype=np.float64)
    if y.ndim != 2 or noise.ndim != 2 or y.shape[0] != noise.shape[0]:
        raise ShapeError(f"label batch {y.shape} and noise batch {noise.shape} are not congruent")
    if y.shape[1] != generator.num_classes:
        raise ShapeError(f"label width {y.shape[1]} != {generator.num_classes}")
    if noise.shape[1] != generator.noise_dim:
        raise ShapeError(f"noise width {noise.shape[1]} != {generator.noise_dim}")
    return _mlp(np.concatenate([y, noise], axis=1), generator.layers)


def ensemble_logits(z, predictors: Union[Mapping[int, Sequence[DenseLayer]], Sequence[Sequence[DenseLayer]]]) -> Tensor:
    """Unweighted mean of the predictors' logits at ``z``.

    A mapping is reduced in ascending key (client id) order so the result is
    bit-identical however the mapping was built.
    """
    if isinstance(predictors, Mapping):
        ordered = [predictors[k] for k in sorted(predictors)]
    else:
        ordered = list(predictors)
    if not ordered:
        raise ValueError("ensemble needs at least one predictor")
    first = [tuple(l.weight.shape) for l in ordered[0]]
    total = None
    for p in ordered:
        if [tuple(l.weight.shape) for l in p] != first:
            raise ShapeError("predictors in an ensemble must share one architecture")
        logits = predict_logits(z, p)
        total = logits if total is None else total + logits
    return total * (1.0 / len(ordered))


def task_loss(proba, y, mode: TaskMode) -> Tensor:
    """Mean cross-entropy (multiclass) or mean per-class binary cross-entropy."""
    proba = lift(proba)
    y = np.asarray(y, dtype=np.float64)
    if proba.shape != y.shape:
        raise ShapeError(f"prediction shape {proba.shape} != label shape {y.shape}")
    p = clip(proba, PROB_CLAMP, 1.0 - PROB_CLAMP)
    if TaskMode(mode) is TaskMode.MULTICLASS:
        return -mean((log(p) * y).sum(axis=1))
    return -mean(log(p) * y + log(1.0 - p) * (1.0 - y))
