"""Dense NHWC tensor kernels.

Tensors are plain rank-4 numpy arrays in NHWC order (float32, or float64 for
oracle and gradient work). Kernels are rank-4 arrays in HWIO order. Every
function here is pure: inputs are never modified.
"""
from __future__ import annotations

from typing import Literal, Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

Padding = Literal["same", "valid"]


def _check_rank4(x: np.ndarray, what: str) -> None:
    if x.ndim != 4:
        raise ValueError(f"{what} must be rank 4, got shape {x.shape}")


def _result_dtype(*arrays) -> np.dtype:
    dt = np.result_type(*arrays)
    return dt if dt in (np.float32, np.float64) else np.dtype(np.float32)


def zero_pad(x: np.ndarray, pad_h: int, pad_w: int) -> np.ndarray:
    """Pad both spatial sides of an NHWC tensor with zeros."""
    _check_rank4(x, "input")
    if pad_h < 0 or pad_w < 0:
        raise ValueError("padding must be non-negative")
    return np.pad(x, ((0, 0), (pad_h, pad_h), (pad_w, pad_w), (0, 0)))


def _patches(xp: np.ndarray, kh: int, kw: int) -> np.ndarray:
    # (N, Ho, Wo, C, kh, kw) -> (N, Ho, Wo, kh, kw, C), contiguous
    win = sliding_window_view(xp, (kh, kw), axis=(1, 2))
    return np.ascontiguousarray(win.transpose(0, 1, 2, 4, 5, 3))


def conv2d(
    x: np.ndarray,
    kernel: np.ndarray,
    padding: Padding = "same",
    bias: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Stride-1 2-D cross-correlation of an NHWC tensor with an HWIO kernel.

    ``"same"`` zero-pads by ``(k - 1) // 2`` on each side (odd kernels only);
    ``"valid"`` shrinks the output by ``k - 1``. Products are accumulated in
    float64 and the result is cast back to the inputs' float type.
    """
    _check_rank4(x, "input")
    _check_rank4(kernel, "kernel")
    kh, kw, cin, cout = kernel.shape
    if x.shape[3] != cin:
        raise ValueError(f"channel mismatch: input has {x.shape[3]}, kernel expects {cin}")
    if bias is not None and np.shape(bias) != (cout,):
        raise ValueError(f"bias must have shape ({cout},), got {np.shape(bias)}")
    out_dtype = _result_dtype(x, kernel)

    if padding == "same":
        if kh % 2 == 0 or kw % 2 == 0:
            raise ValueError("same padding requires odd kernel sizes")
        xp = zero_pad(x.astype(np.float64, copy=False), (kh - 1) // 2, (kw - 1) // 2)
    elif padding == "valid":
        if kh > x.shape[1] or kw > x.shape[2]:
            raise ValueError(f"kernel {kh}x{kw} larger than input {x.shape[1]}x{x.shape[2]}")
        xp = x.astype(np.float64, copy=False)
    else:
        raise ValueError(f"unknown padding {padding!r}")

    n = xp.shape[0]
    ho, wo = xp.shape[1] - kh + 1, xp.shape[2] - kw + 1
    if n * ho * wo == 0:
        return np.zeros((n, ho, wo, cout), dtype=out_dtype)

    k64 = kernel.astype(np.float64, copy=False)
    if kh == 1 and kw == 1:
        out = xp.reshape(-1, cin) @ k64.reshape(cin, cout)
    else:
        cols = _patches(xp, kh, kw).reshape(n * ho * wo, kh * kw * cin)
        out = cols @ k64.reshape(kh * kw * cin, cout)
    if bias is not None:
        out += np.asarray(bias, dtype=np.float64)
    return out.reshape(n, ho, wo, cout).astype(out_dtype)


def conv2d_backward(
    x: np.ndarray, kernel: np.ndarray, grad_out: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of a same-padded :func:`conv2d` w.r.t. its input and kernel.

    Returns ``(grad_input, grad_kernel)``; the bias gradient is simply
    ``grad_out.sum(axis=(0, 1, 2))``.
    """
    kh, kw, cin, cout = kernel.shape
    if grad_out.shape != x.shape[:3] + (cout,):
        raise ValueError(f"grad shape {grad_out.shape} does not match output {x.shape[:3] + (cout,)}")
    g64 = grad_out.astype(np.float64, copy=False)
    xp = zero_pad(x.astype(np.float64, copy=False), (kh - 1) // 2, (kw - 1) // 2)
    if kh == 1 and kw == 1:
        cols = xp.reshape(-1, cin)
    else:
        cols = _patches(xp, kh, kw).reshape(-1, kh * kw * cin)
    grad_k = (cols.T @ g64.reshape(-1, cout)).reshape(kernel.shape)
    # input gradient: correlate with the spatially flipped, io-swapped kernel
    flipped = kernel[::-1, ::-1].transpose(0, 1, 3, 2)
    grad_x = conv2d(g64, flipped.astype(np.float64), "same")
    dt = _result_dtype(x, kernel)
    return grad_x.astype(dt), grad_k.astype(dt)


def prelu(x: np.ndarray, slopes: np.ndarray) -> np.ndarray:
    """Per-channel parametric ReLU: ``x`` where ``x >= 0``, else ``slope[c] * x``."""
    slopes = np.asarray(slopes)
    if slopes.shape != (x.shape[-1],):
        raise ValueError(f"expected {x.shape[-1]} slopes, got shape {slopes.shape}")
    return np.where(x >= 0, x, x * slopes.astype(x.dtype, copy=False))


def relu(x: np.ndarray) -> np.ndarray:
    return prelu(x, np.zeros(x.shape[-1], dtype=x.dtype))


def depth_to_space(x: np.ndarray, block: int) -> np.ndarray:
    """Move channel groups into ``block x block`` spatial cells.

    Output pixel ``(block*h + i, block*w + j)`` channel ``c`` reads input
    channel ``(i*block + j) * C_out + c``.
    """
    _check_rank4(x, "input")
    n, h, w, c = x.shape
    if block < 1 or c % (block * block):
        raise ValueError(f"{c} channels not divisible by block^2 = {block * block}")
    co = c // (block * block)
    y = x.reshape(n, h, w, block, block, co).transpose(0, 1, 3, 2, 4, 5)
    return y.reshape(n, h * block, w * block, co)


def space_to_depth(x: np.ndarray, block: int) -> np.ndarray:
    """Inverse of :func:`depth_to_space`."""
    _check_rank4(x, "input")
    n, h, w, c = x.shape
    if block < 1 or h % block or w % block:
        raise ValueError(f"spatial dims {h}x{w} not divisible by block {block}")
    y = x.reshape(n, h // block, block, w // block, block, c).transpose(0, 1, 3, 2, 4, 5)
    return y.reshape(n, h // block, w // block, block * block * c)
