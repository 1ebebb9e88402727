"""Desk-scale training: reverse-mode gradients through the SESR graph, l1 loss, Adam."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import tensor as T
from .graph import (Activation, Conv, DepthToSpace, LayerGraph, LinearBlock, LongResidualAdd,
                    NetworkSpec, ShortResidualAdd, WeightStore, _run, build_training_graph)

log = logging.getLogger(__name__)

GradStore = dict[str, np.ndarray]


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 5e-4
    batch_size: int = 8
    steps: int = 1000
    crop_size: int = 64
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.lr < 0:
            raise ValueError("learning rate must be non-negative")
        if self.batch_size < 1 or self.steps < 0:
            raise ValueError("batch_size must be >= 1 and steps >= 0")


def l1_loss(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean absolute error and its (sub)gradient ``sign(pred - target) / count``."""
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {target.shape}")
    diff = pred.astype(np.float64) - target
    n = diff.size
    return float(np.abs(diff).sum() / n), (np.sign(diff) / n).astype(pred.dtype)


def backward(
    graph: LayerGraph, weights: WeightStore, x: np.ndarray, grad_out: np.ndarray
) -> GradStore:
    """Gradient of ``sum(forward(x) * grad_out)`` for every weight in the store."""
    out, trace = _run(graph, weights, x, keep=True)
    if grad_out.shape != out.shape:
        raise ValueError(f"upstream grad {grad_out.shape} does not match output {out.shape}")
    return _backprop(graph, weights, trace, grad_out)


def _backprop(graph, weights, trace, grad_out) -> GradStore:
    grads: GradStore = {name: np.zeros_like(w) for name, w in weights.items()
                        if name in graph.weight_shapes()}
    pending: dict[str, np.ndarray] = {}
    g = grad_out
    for layer, inp, extra in reversed(trace):
        if layer.name in pending:
            g = g + pending.pop(layer.name)
        if isinstance(layer, LinearBlock):
            n = layer.name
            g_mid, grads[f"{n}.project"] = T.conv2d_backward(extra, weights[f"{n}.project"], g)
            if layer.bias:
                grads[f"{n}.project_bias"] = g.sum(axis=(0, 1, 2)).astype(g.dtype)
                grads[f"{n}.expand_bias"] = g_mid.sum(axis=(0, 1, 2)).astype(g.dtype)
            g_in, grads[f"{n}.expand"] = T.conv2d_backward(inp, weights[f"{n}.expand"], g_mid)
        elif isinstance(layer, Conv):
            if layer.bias:
                grads[f"{layer.name}.bias"] = g.sum(axis=(0, 1, 2)).astype(g.dtype)
            g_in, grads[f"{layer.name}.kernel"] = T.conv2d_backward(inp, weights[f"{layer.name}.kernel"], g)
        elif isinstance(layer, Activation):
            neg = inp < 0
            if layer.kind == "prelu":
                slope = weights[f"{layer.name}.slope"]
                grads[f"{layer.name}.slope"] = np.where(neg, inp * g, 0).sum(axis=(0, 1, 2)).astype(slope.dtype)
                g_in = np.where(neg, g * slope, g)
            else:
                g_in = np.where(neg, 0, g).astype(g.dtype)
        elif isinstance(layer, (ShortResidualAdd, LongResidualAdd)):
            g_src = g
            if isinstance(layer, LongResidualAdd) and layer.broadcast:
                g_src = g.sum(axis=-1, keepdims=True)
            pending[layer.source] = pending.get(layer.source, 0) + g_src
            g_in = g
        elif isinstance(layer, DepthToSpace):
            g_in = T.space_to_depth(g, layer.block)
        else:
            raise TypeError(f"unknown layer {layer!r}")
        g = g_in
    return grads


class Adam:
    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: WeightStore, grads: GradStore) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for name, g in grads.items():
            g = g.astype(np.float64)
            if name not in self.m:
                self.m[name] = np.zeros_like(g)
                self.v[name] = np.zeros_like(g)
            self.m[name] = self.beta1 * self.m[name] + (1 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1 - self.beta2) * g * g
            update = self.lr * (self.m[name] / bc1) / (np.sqrt(self.v[name] / bc2) + self.eps)
            params[name] = (params[name] - update).astype(params[name].dtype)


def _sample_batch(rng, dataset, batch, crop, scale):
    lrs, hrs = [], []
    for _ in range(batch):
        lr, hr = dataset[rng.integers(len(dataset))]
        c = min(crop, lr.shape[0], lr.shape[1])
        y = rng.integers(lr.shape[0] - c + 1)
        x = rng.integers(lr.shape[1] - c + 1)
        lrs.append(lr[y:y + c, x:x + c])
        hrs.append(hr[y * scale:(y + c) * scale, x * scale:(x + c) * scale])
    # crops are clipped to the smallest image, so sizes match within a batch
    c = min(a.shape[0] for a in lrs), min(a.shape[1] for a in lrs)
    lrs = [a[:c[0], :c[1]] for a in lrs]
    hrs = [a[:c[0] * scale, :c[1] * scale] for a in hrs]
    return np.stack(lrs)[..., None], np.stack(hrs)[..., None]


def train_toy(
    spec: NetworkSpec,
    config: TrainConfig,
    dataset: Sequence[tuple[np.ndarray, np.ndarray]],
    dtype=np.float32,
    init: Optional[WeightStore] = None,
) -> tuple[WeightStore, list[float]]:
    """Train on ``(low_res, high_res)`` Y-plane pairs in [0, 1]; returns weights and per-step loss.

    Crops are taken in low-resolution space (``crop_size`` square) with the
    aligned ``scale`` times larger high-resolution window.
    """
    if not dataset:
        raise ValueError("dataset is empty")
    if config.crop_size < 2 * spec.scale:
        raise ValueError(f"crop size must be >= 2 * scale = {2 * spec.scale}")
    data = []
    for lr, hr in dataset:
        lr, hr = np.asarray(lr), np.asarray(hr)
        if lr.ndim != 2 or hr.shape != (lr.shape[0] * spec.scale, lr.shape[1] * spec.scale):
            raise ValueError(f"high-res shape {hr.shape} is not {spec.scale}x low-res shape {lr.shape}")
        data.append((lr.astype(dtype), hr.astype(dtype)))

    graph, weights = build_training_graph(spec, config.seed, dtype)
    if init is not None:
        graph.check_weights(init)
        weights = {k: v.astype(dtype) for k, v in init.items()}
    rng = np.random.default_rng(config.seed + 1)
    opt = Adam(config.lr, config.beta1, config.beta2, config.eps)
    trace = []
    for step in range(config.steps):
        x, y = _sample_batch(rng, data, config.batch_size, config.crop_size, spec.scale)
        pred, fwd = _run(graph, weights, x, keep=True)
        loss, g = l1_loss(pred, y)
        grads = _backprop(graph, weights, fwd, g)
        opt.step(weights, grads)
        trace.append(loss)
        if step % 200 == 0:
            log.debug("step %d loss %.6f", step, loss)
    return weights, trace


def evaluate_loss(graph: LayerGraph, weights: WeightStore, dataset) -> float:
    """Mean l1 loss over whole images of a dataset."""
    losses = []
    for lr, hr in dataset:
        pred = _run(graph, weights, np.asarray(lr, dtype=np.float64)[None, ..., None], keep=False)[0]
        losses.append(l1_loss(pred[0, ..., 0], np.asarray(hr, dtype=np.float64))[0])
    return float(np.mean(losses))
