"""Network topology, activations, activity states and seeded initializers.

Activities are stored batch-major: layer ``l`` holds an ``(N, d_l)`` matrix and
a layer computes ``f(z_prev @ W.T + b)``.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import InvalidDimensionError, PCFlowError, ShapeError

_ACTIVATION_KINDS = ("identity", "tanh", "relu", "leaky_relu")


@dataclass(frozen=True)
class Activation:
    """Elementwise activation with an exact derivative.

    ``slope`` is only meaningful for ``leaky_relu``.
    """

    kind: str = "identity"
    slope: float = 0.01

    def __post_init__(self):
        if self.kind not in _ACTIVATION_KINDS:
            raise ValueError(f"unknown activation {self.kind!r}; expected one of {_ACTIVATION_KINDS}")

    @classmethod
    def parse(cls, tag: str) -> "Activation":
        """Parse ``"tanh"``, ``"relu"``, ``"identity"`` or ``"leaky_relu:0.1"``."""
        tag = tag.strip().lower()
        if tag in ("linear", "id"):
            tag = "identity"
        if tag.startswith("leaky_relu"):
            _, _, slope = tag.partition(":")
            return cls("leaky_relu", float(slope) if slope else 0.01)
        return cls(tag)

    @property
    def tag(self) -> str:
        if self.kind == "leaky_relu":
            return f"leaky_relu:{self.slope!r}"
        return self.kind

    def __call__(self, a: np.ndarray) -> np.ndarray:
        if self.kind == "identity":
            return a
        if self.kind == "tanh":
            return np.tanh(a)
        if self.kind == "relu":
            return np.maximum(a, 0.0)
        return np.where(a > 0, a, self.slope * a)

    def deriv(self, a: np.ndarray, fa: np.ndarray | None = None) -> np.ndarray:
        """Derivative at pre-activation ``a``. ``fa`` may carry ``self(a)`` to skip recomputation."""
        if self.kind == "identity":
            return np.ones_like(a)
        if self.kind == "tanh":
            t = np.tanh(a) if fa is None else fa
            return 1.0 - t * t
        if self.kind == "relu":
            return (a > 0).astype(a.dtype)
        return np.where(a > 0, 1.0, self.slope).astype(a.dtype)


IDENTITY = Activation("identity")
TANH = Activation("tanh")
RELU = Activation("relu")


@dataclass(frozen=True)
class Layer:
    weight: np.ndarray
    bias: np.ndarray | None
    activation: Activation = IDENTITY

    def __post_init__(self):
        w = np.asarray(self.weight)
        if w.ndim != 2:
            raise ShapeError(f"weight must be 2-D, got shape {w.shape}")
        object.__setattr__(self, "weight", w)
        if self.bias is not None:
            b = np.asarray(self.bias, dtype=w.dtype)
            if b.shape != (w.shape[0],):
                raise ShapeError(f"bias shape {b.shape} does not match weight rows {w.shape[0]}")
            object.__setattr__(self, "bias", b)
        if not np.all(np.isfinite(w)) or (self.bias is not None and not np.all(np.isfinite(self.bias))):
            raise PCFlowError("layer parameters must be finite")

    @property
    def out_dim(self) -> int:
        return self.weight.shape[0]

    @property
    def in_dim(self) -> int:
        return self.weight.shape[1]

    @cached_property
    def weight_t(self) -> np.ndarray:
        # contiguous transpose: noticeably faster BLAS calls for small batches
        return np.ascontiguousarray(self.weight.T)

    def preact(self, z_prev: np.ndarray) -> np.ndarray:
        a = z_prev @ self.weight_t
        if self.bias is not None:
            a = a + self.bias
        return a


@dataclass(frozen=True)
class Network:
    layers: tuple[Layer, ...]
    input_dim: int

    def __post_init__(self):
        layers = tuple(self.layers)
        object.__setattr__(self, "layers", layers)
        if len(layers) < 1:
            raise InvalidDimensionError("a network needs at least one layer")
        prev = self.input_dim
        for i, layer in enumerate(layers):
            if layer.in_dim != prev:
                raise ShapeError(
                    f"layer {i + 1}: weight has {layer.in_dim} columns, expected {prev}"
                )
            prev = layer.out_dim

    @property
    def depth(self) -> int:
        return len(self.layers)

    @property
    def dims(self) -> list[int]:
        return [self.input_dim] + [layer.out_dim for layer in self.layers]

    @property
    def output_dim(self) -> int:
        return self.layers[-1].out_dim

    @property
    def dtype(self):
        return self.layers[0].weight.dtype

    def is_linear(self) -> bool:
        return all(layer.activation.kind == "identity" for layer in self.layers)

    def has_biases(self) -> bool:
        return any(layer.bias is not None and np.any(layer.bias != 0) for layer in self.layers)

    def astype(self, dtype) -> "Network":
        return Network(
            tuple(
                Layer(
                    layer.weight.astype(dtype),
                    None if layer.bias is None else layer.bias.astype(dtype),
                    layer.activation,
                )
                for layer in self.layers
            ),
            self.input_dim,
        )

    def with_params(self, weights: Sequence[np.ndarray], biases: Sequence[np.ndarray | None]) -> "Network":
        return Network(
            tuple(Layer(w, b, layer.activation) for w, b, layer in zip(weights, biases, self.layers)),
            self.input_dim,
        )


@dataclass(frozen=True)
class ActivityState:
    """Activities ``z_0 .. z_L``; clamped layers are never touched by inference."""

    activities: tuple[np.ndarray, ...]
    clamped_input: bool = True
    clamped_output: bool = False

    def __post_init__(self):
        acts = tuple(np.asarray(z) for z in self.activities)
        object.__setattr__(self, "activities", acts)
        if len(acts) < 2:
            raise ShapeError("an activity state needs at least z_0 and z_L")
        n = acts[0].shape[0]
        for i, z in enumerate(acts):
            if z.ndim != 2:
                raise ShapeError(f"activity {i} must be 2-D, got shape {z.shape}")
            if z.shape[0] != n:
                raise ShapeError(f"activity {i} has batch {z.shape[0]}, expected {n}")

    @property
    def batch_size(self) -> int:
        return self.activities[0].shape[0]

    @property
    def depth(self) -> int:
        return len(self.activities) - 1

    def free_indices(self) -> list[int]:
        lo = 1 if self.clamped_input else 0
        hi = self.depth - 1 if self.clamped_output else self.depth
        return list(range(lo, hi + 1))

    def replace(self, activities: Sequence[np.ndarray]) -> "ActivityState":
        return ActivityState(tuple(activities), self.clamped_input, self.clamped_output)

    def with_output(self, y: np.ndarray) -> "ActivityState":
        """Clamp the top layer to ``y``."""
        y = np.asarray(y, dtype=self.activities[-1].dtype)
        if y.shape != self.activities[-1].shape:
            raise ShapeError(f"target shape {y.shape} does not match output activity {self.activities[-1].shape}")
        return ActivityState(self.activities[:-1] + (y,), self.clamped_input, True)

    def with_input(self, x: np.ndarray) -> "ActivityState":
        x = np.asarray(x, dtype=self.activities[0].dtype)
        if x.shape != self.activities[0].shape:
            raise ShapeError(f"input shape {x.shape} does not match input activity {self.activities[0].shape}")
        return ActivityState((x,) + self.activities[1:], True, self.clamped_output)

    def check_against(self, network: Network) -> None:
        if self.depth != network.depth:
            raise ShapeError(f"state has {self.depth} layers, network has {network.depth}")
        for i, (z, d) in enumerate(zip(self.activities, network.dims)):
            if z.shape[1] != d:
                raise ShapeError(f"activity {i} has width {z.shape[1]}, network expects {d}")


def _check_input(network: Network, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x)
    if x.ndim != 2 or x.shape[1] != network.input_dim:
        raise ShapeError(f"layer 1: input shape {x.shape} incompatible with input_dim {network.input_dim}")
    if not np.all(np.isfinite(x)):
        raise PCFlowError("input contains non-finite values")
    return x


def forward(network: Network, x: np.ndarray) -> np.ndarray:
    z = _check_input(network, x)
    for layer in network.layers:
        z = layer.activation(layer.preact(z))
    return z


def init_network(
    dims: Sequence[int],
    activation: Activation | str = TANH,
    seed: int = 0,
    *,
    bias: bool = True,
    dtype=np.float64,
) -> Network:
    """Uniform fan-in init, ``W ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in))``, zero biases.

    ``activation`` is either one activation for every layer or a sequence with
    one entry per layer. ``bias=False`` builds bias-free layers, which the
    closed-form theory requires.
    """
    dims = [int(d) for d in dims]
    if len(dims) < 2:
        raise InvalidDimensionError("dims needs at least an input and an output width")
    if any(d <= 0 for d in dims):
        raise InvalidDimensionError(f"all dims must be positive, got {dims}")
    if isinstance(activation, (str, Activation)):
        acts = [activation] * (len(dims) - 1)
    else:
        acts = list(activation)
        if len(acts) != len(dims) - 1:
            raise InvalidDimensionError("need one activation per layer")
    acts = [Activation.parse(a) if isinstance(a, str) else a for a in acts]

    rng = np.random.default_rng(seed)
    layers = []
    for fan_in, fan_out, act in zip(dims[:-1], dims[1:], acts):
        bound = 1.0 / math.sqrt(fan_in)
        w = rng.uniform(-bound, bound, size=(fan_out, fan_in)).astype(dtype)
        b = np.zeros(fan_out, dtype=dtype) if bias else None
        layers.append(Layer(w, b, act))
    return Network(tuple(layers), dims[0])


def init_activities_with_ffwd(network: Network, x: np.ndarray) -> ActivityState:
    z = _check_input(network, x).astype(network.dtype, copy=False)
    acts = [z]
    for layer in network.layers:
        z = layer.activation(layer.preact(z))
        acts.append(z)
    return ActivityState(tuple(acts), clamped_input=True, clamped_output=False)


def init_activities_random(
    network: Network,
    batch: int,
    seed: int = 0,
    scale: float = 0.05,
    *,
    x: np.ndarray | None = None,
    y: np.ndarray | None = None,
) -> ActivityState:
    """Gaussian activities for every free layer.

    Layers given by ``x`` / ``y`` are clamped to those values instead.
    """
    if not scale > 0:
        raise ValueError(f"scale must be positive, got {scale}")
    if batch < 1:
        raise InvalidDimensionError("batch must be >= 1")
    rng = np.random.default_rng(seed)
    dtype = network.dtype
    acts = [rng.normal(0.0, scale, size=(batch, d)).astype(dtype) for d in network.dims]
    state = ActivityState(tuple(acts), clamped_input=False, clamped_output=False)
    if x is not None:
        state = state.with_input(x)
    if y is not None:
        state = state.with_output(y)
    return state


# --------------------------------------------------------------------------
# Checkpoints
#
# Layout: the 8-byte magic b"PCFLOW1\n", a uint32 little-endian header length,
# a UTF-8 JSON header {"L", "input_dim", "dims", "activations", "has_bias"},
# then for each layer the row-major float64 little-endian weight followed by
# its bias (only when has_bias[l]).
# --------------------------------------------------------------------------

CHECKPOINT_MAGIC = b"PCFLOW1\n"


@dataclass
class _Header:
    L: int
    input_dim: int
    dims: list[int]
    activations: list[str]
    has_bias: list[bool] = field(default_factory=list)


def save_network(network: Network, path: str | Path) -> None:
    header = _Header(
        L=network.depth,
        input_dim=network.input_dim,
        dims=network.dims,
        activations=[layer.activation.tag for layer in network.layers],
        has_bias=[layer.bias is not None for layer in network.layers],
    )
    blob = json.dumps(header.__dict__, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for layer in network.layers:
            fh.write(np.ascontiguousarray(layer.weight, dtype="<f8").tobytes())
            if layer.bias is not None:
                fh.write(np.ascontiguousarray(layer.bias, dtype="<f8").tobytes())


def load_network(path: str | Path) -> Network:
    raw = Path(path).read_bytes()
    if not raw.startswith(CHECKPOINT_MAGIC):
        raise PCFlowError(f"{path}: not a pcflow checkpoint")
    off = len(CHECKPOINT_MAGIC)
    (hlen,) = struct.unpack_from("<I", raw, off)
    off += 4
    header = _Header(**json.loads(raw[off : off + hlen]))
    off += hlen
    layers = []
    for i in range(header.L):
        rows, cols = header.dims[i + 1], header.dims[i]
        w = np.frombuffer(raw, dtype="<f8", count=rows * cols, offset=off).reshape(rows, cols)
        off += 8 * rows * cols
        b = None
        if header.has_bias[i]:
            b = np.frombuffer(raw, dtype="<f8", count=rows, offset=off)
            off += 8 * rows
        layers.append(Layer(w.astype(np.float64), None if b is None else b.astype(np.float64),
                            Activation.parse(header.activations[i])))
    if off != len(raw):
        raise PCFlowError(f"{path}: {len(raw) - off} unexpected trailing bytes")
    return Network(tuple(layers), header.input_dim)
