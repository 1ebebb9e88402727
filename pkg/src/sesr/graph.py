"""SESR network graphs: training-time (overparameterized) and inference-time.

A graph is an ordered list of layers. Each layer's output is kept under the
layer's name while executing, so residual layers refer to their source by
name (``"input"`` is the network input).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from . import tensor as T

log = logging.getLogger(__name__)

WeightStore = dict[str, np.ndarray]

TRAINING = "training"
COLLAPSED = "collapsed"


@dataclass(frozen=True)
class NetworkSpec:
    f: int = 16
    m: int = 5
    scale: int = 2
    p: int = 256
    use_linear_blocks: bool = True
    use_short_residuals: bool = True
    use_input_residual: bool = True
    activation: str = "prelu"
    bias: bool = False

    def __post_init__(self):
        if self.scale not in (2, 4):
            raise ValueError(f"scale must be 2 or 4, got {self.scale}")
        if self.f < 1 or self.m < 0 or self.p < 1:
            raise ValueError(f"need f >= 1, m >= 0, p >= 1 (got f={self.f}, m={self.m}, p={self.p})")
        if self.activation not in ("prelu", "relu"):
            raise ValueError(f"activation must be 'prelu' or 'relu', got {self.activation!r}")

    @property
    def out_channels(self) -> int:
        """Channels of the last convolution: 4 for x2, 16 for x4."""
        return self.scale * self.scale

    @property
    def shuffle_blocks(self) -> tuple[int, ...]:
        # x4 applies the 2x shuffle twice to the 16-channel output
        return (2,) if self.scale == 2 else (2, 2)

    @property
    def receptive_radius(self) -> int:
        return self.m + 4

    def conv_layout(self) -> list[tuple[str, int, int, int]]:
        """(name, k, c_in, c_out) for each of the m + 2 convolutions."""
        layout = [("head", 5, 1, self.f)]
        layout += [(f"body{i}", 3, self.f, self.f) for i in range(1, self.m + 1)]
        layout.append(("tail", 5, self.f, self.out_channels))
        return layout


@dataclass(frozen=True)
class LinearBlock:
    """k x k conv expanding to p channels, then a 1x1 projection; no nonlinearity between."""
    name: str
    k: int
    c_in: int
    c_out: int
    p: int
    bias: bool = False

    def weight_shapes(self) -> dict[str, tuple[int, ...]]:
        shapes = {f"{self.name}.expand": (self.k, self.k, self.c_in, self.p),
                  f"{self.name}.project": (1, 1, self.p, self.c_out)}
        if self.bias:
            shapes[f"{self.name}.expand_bias"] = (self.p,)
            shapes[f"{self.name}.project_bias"] = (self.c_out,)
        return shapes


@dataclass(frozen=True)
class Conv:
    name: str
    k: int
    c_in: int
    c_out: int
    bias: bool = False

    def weight_shapes(self) -> dict[str, tuple[int, ...]]:
        shapes = {f"{self.name}.kernel": (self.k, self.k, self.c_in, self.c_out)}
        if self.bias:
            shapes[f"{self.name}.bias"] = (self.c_out,)
        return shapes


@dataclass(frozen=True)
class Activation:
    name: str
    kind: str
    channels: int

    def weight_shapes(self) -> dict[str, tuple[int, ...]]:
        return {f"{self.name}.slope": (self.channels,)} if self.kind == "prelu" else {}


@dataclass(frozen=True)
class ShortResidualAdd:
    name: str
    source: str

    def weight_shapes(self):
        return {}


@dataclass(frozen=True)
class LongResidualAdd:
    """Adds a saved activation; ``broadcast`` spreads a 1-channel source over all channels."""
    name: str
    source: str
    broadcast: bool = False

    def weight_shapes(self):
        return {}


@dataclass(frozen=True)
class DepthToSpace:
    name: str
    block: int

    def weight_shapes(self):
        return {}


Layer = Union[LinearBlock, Conv, Activation, ShortResidualAdd, LongResidualAdd, DepthToSpace]


@dataclass
class LayerGraph:
    spec: NetworkSpec
    form: str
    layers: list = field(default_factory=list)

    def weight_shapes(self) -> dict[str, tuple[int, ...]]:
        shapes: dict[str, tuple[int, ...]] = {}
        for layer in self.layers:
            shapes.update(layer.weight_shapes())
        return shapes

    def count(self, kind: type) -> int:
        return sum(isinstance(layer, kind) for layer in self.layers)

    def check_weights(self, weights: WeightStore) -> None:
        """Raise if a weight slot is missing or has the wrong shape."""
        for name, shape in self.weight_shapes().items():
            if name not in weights:
                raise KeyError(f"missing weight {name!r}")
            if tuple(weights[name].shape) != shape:
                raise ValueError(f"weight {name!r} has shape {weights[name].shape}, expected {shape}")


def _build(spec: NetworkSpec, form: str) -> LayerGraph:
    if spec.m == 0:
        log.warning("m=0: the feature residual adds the head output to itself")
    layers: list = []
    prev = "input"
    for name, k, cin, cout in spec.conv_layout():
        if form == TRAINING and spec.use_linear_blocks:
            layers.append(LinearBlock(name, k, cin, cout, spec.p, spec.bias))
        else:
            layers.append(Conv(name, k, cin, cout, spec.bias))
        if name.startswith("body") and form == TRAINING and spec.use_short_residuals:
            layers.append(ShortResidualAdd(f"{name}_res", prev))
        if name == "tail":
            if spec.use_input_residual:
                layers.append(LongResidualAdd("input_res", "input", broadcast=True))
        else:
            layers.append(Activation(f"{name}_act", spec.activation, cout))
            prev = f"{name}_act"
            if name == "body" + str(spec.m) or (spec.m == 0 and name == "head"):
                layers.append(LongResidualAdd("feature_res", "head_act"))
    for i, block in enumerate(spec.shuffle_blocks):
        layers.append(DepthToSpace(f"shuffle{i}", block))
    return LayerGraph(spec, form, layers)


def build_training_graph(
    spec: NetworkSpec, rng_seed: int, dtype=np.float32
) -> tuple[LayerGraph, WeightStore]:
    """Training-time graph plus freshly initialized weights.

    Convolutions use He-normal init (std = sqrt(2 / (k^2 * C_in))), biases
    start at zero and PReLU slopes at 0.25.
    """
    graph = _build(spec, TRAINING)
    rng = np.random.default_rng(rng_seed)
    weights: WeightStore = {}
    for name, shape in graph.weight_shapes().items():
        if name.endswith(".slope"):
            weights[name] = np.full(shape, 0.25, dtype=dtype)
        elif len(shape) == 1:
            weights[name] = np.zeros(shape, dtype=dtype)
        else:
            k, _, cin, _ = shape
            std = np.sqrt(2.0 / (k * k * cin))
            weights[name] = (rng.standard_normal(shape) * std).astype(dtype)
    return graph, weights


def build_inference_graph(spec: NetworkSpec) -> LayerGraph:
    """Collapsed graph: m + 2 plain convolutions, the two long residuals and the shuffle."""
    return _build(spec, COLLAPSED)


def _run(graph: LayerGraph, weights: WeightStore, x: np.ndarray, keep: bool):
    if x.ndim != 4 or x.shape[3] != 1:
        raise ValueError(f"input must be N x H x W x 1, got shape {x.shape}")
    acts = {"input": x}
    trace = []
    for layer in graph.layers:
        extra = None
        if isinstance(layer, LinearBlock):
            mid = T.conv2d(x, weights[f"{layer.name}.expand"], "same",
                           weights.get(f"{layer.name}.expand_bias"))
            y = T.conv2d(mid, weights[f"{layer.name}.project"], "same",
                         weights.get(f"{layer.name}.project_bias"))
            extra = mid
        elif isinstance(layer, Conv):
            y = T.conv2d(x, weights[f"{layer.name}.kernel"], "same", weights.get(f"{layer.name}.bias"))
        elif isinstance(layer, Activation):
            if layer.kind == "prelu":
                y = T.prelu(x, weights[f"{layer.name}.slope"])
            else:
                y = T.relu(x)
        elif isinstance(layer, (ShortResidualAdd, LongResidualAdd)):
            # a 1-channel source broadcasts over every channel
            y = x + acts[layer.source]
        elif isinstance(layer, DepthToSpace):
            y = T.depth_to_space(x, layer.block)
        else:
            raise TypeError(f"unknown layer {layer!r}")
        if keep:
            trace.append((layer, x, extra))
        acts[layer.name] = y
        x = y
    return x, trace


def forward(graph: LayerGraph, weights: WeightStore, x: np.ndarray) -> np.ndarray:
    """Run the graph on an N x H x W x 1 input; returns the unclamped upscaled output."""
    out, _ = _run(graph, weights, x, keep=False)
    return out
