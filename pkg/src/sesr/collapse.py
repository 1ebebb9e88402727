"""Analytic collapse of linear blocks and short residuals into single convolutions.

A linear block is a k x k convolution followed by 1x1 convolutions with no
nonlinearity in between, so the whole block is one linear operator. Its
kernel is recovered by pushing an identity probe through the block:

* the probe is a batch of ``n_in`` one-hot 1x1 images, zero padded to
  ``(2k - 1) x (2k - 1)``;
* valid convolution with the first kernel leaves a k x k map per probe whose
  entry ``(a, b)`` equals ``W_1[k-1-a, k-1-b]`` (correlation walks the kernel
  backwards over a single impulse);
* so reversing both spatial axes and moving the batch axis into the input
  channel slot yields an HWIO kernel. The 1x1 layers act pointwise and
  commute with that rearrangement.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import tensor as T
from .graph import (TRAINING, Activation, Conv, LayerGraph, LinearBlock,
                    ShortResidualAdd, WeightStore)


@dataclass
class CollapsedWeight:
    kernel: np.ndarray
    bias: Optional[np.ndarray] = None
    provenance: list[str] = field(default_factory=list)


def collapse_linear_block(
    weights: Sequence[np.ndarray],
    k: int,
    n_in: int,
    n_out: int,
    biases: Optional[Sequence[Optional[np.ndarray]]] = None,
    provenance: Sequence[str] = (),
) -> CollapsedWeight:
    """Fuse ``W_1`` (k x k) and the following 1x1 kernels into one k x k kernel.

    Works in float64 throughout. If ``biases`` is given (one entry per layer,
    ``None`` for none) the collapsed bias is the block's response to a zero
    input, which is spatially constant under same padding.
    """
    if len(weights) < 1:
        raise ValueError("a linear block needs at least one layer")
    first = weights[0]
    if first.shape[:3] != (k, k, n_in):
        raise ValueError(f"first kernel shape {first.shape} does not match k={k}, n_in={n_in}")
    chan = first.shape[3]
    for i, w in enumerate(weights[1:], start=2):
        if w.shape[:2] != (1, 1):
            raise ValueError(f"layer {i} of the block is {w.shape[0]}x{w.shape[1]}, expected 1x1")
        if w.shape[2] != chan:
            raise ValueError(f"layer {i} expects {w.shape[2]} input channels, chain provides {chan}")
        chan = w.shape[3]
    if chan != n_out:
        raise ValueError(f"block ends with {chan} channels, expected n_out={n_out}")

    probe = np.eye(n_in, dtype=np.float64).reshape(n_in, 1, 1, n_in)
    probe = T.zero_pad(probe, k - 1, k - 1)
    x = probe
    for w in weights:
        x = T.conv2d(x, w.astype(np.float64), "valid")
    kernel = np.transpose(x[:, ::-1, ::-1, :], (1, 2, 0, 3)).copy()

    bias = None
    if biases is not None and any(b is not None for b in biases):
        bias = np.zeros(first.shape[3])
        for i, (w, b) in enumerate(zip(weights, biases)):
            if i:
                bias = bias @ w[0, 0].astype(np.float64)
            if b is not None:
                bias = bias + np.asarray(b, dtype=np.float64)
    return CollapsedWeight(kernel, bias, list(provenance))


def residual_identity_weight(collapsed: CollapsedWeight | np.ndarray) -> np.ndarray:
    """Kernel that reproduces its input under same padding: a one at the centre tap of each channel's own plane."""
    kernel = collapsed.kernel if isinstance(collapsed, CollapsedWeight) else collapsed
    k, kw, n_in, n_out = kernel.shape
    if k != kw or k not in (3, 5):
        raise ValueError(f"residual kernel must be 3x3 or 5x5, got {k}x{kw}")
    if n_in != n_out:
        raise ValueError(f"residual needs matching channels, got {n_in} -> {n_out}")
    idx = 1 if k == 3 else 2
    w_r = np.zeros(kernel.shape, dtype=np.float64)
    for i in range(n_out):
        w_r[idx, idx, i, i] = 1.0
    return w_r


def collapse_network(graph: LayerGraph, weights: WeightStore) -> WeightStore:
    """Turn a training-form weight store into the store for ``build_inference_graph(graph.spec)``.

    Output dtype follows the training weights; the arithmetic is float64.
    """
    if graph.form != TRAINING:
        raise ValueError(f"graph is in {graph.form!r} form; only training graphs can be collapsed")
    graph.check_weights(weights)
    dtype = next(iter(weights.values())).dtype if weights else np.float32
    residual_blocks = {layer.name[:-len("_res")] for layer in graph.layers
                       if isinstance(layer, ShortResidualAdd)}

    out: WeightStore = {}
    for layer in graph.layers:
        if isinstance(layer, LinearBlock):
            names = [f"{layer.name}.expand", f"{layer.name}.project"]
            bias_names = [f"{layer.name}.expand_bias", f"{layer.name}.project_bias"]
            cw = collapse_linear_block(
                [weights[n] for n in names], layer.k, layer.c_in, layer.c_out,
                biases=[weights.get(n) for n in bias_names] if layer.bias else None,
                provenance=names)
        elif isinstance(layer, Conv):
            name = f"{layer.name}.kernel"
            cw = CollapsedWeight(weights[name].astype(np.float64), provenance=[name])
            if layer.bias:
                cw.bias = weights[f"{layer.name}.bias"].astype(np.float64)
        elif isinstance(layer, Activation):
            if layer.kind == "prelu":
                out[f"{layer.name}.slope"] = weights[f"{layer.name}.slope"].astype(dtype)
            continue
        else:
            continue
        kernel = cw.kernel
        if layer.name in residual_blocks:
            kernel = kernel + residual_identity_weight(cw)
        out[f"{layer.name}.kernel"] = kernel.astype(dtype)
        if layer.bias:
            out[f"{layer.name}.bias"] = cw.bias.astype(dtype)
    return out

