"""Measurement side: Y-channel planes, bicubic baseline, PSNR/SSIM, tiled inference."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Literal, Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from PIL import Image

from .graph import LayerGraph, WeightStore, forward


@dataclass
class ImagePlane:
    """A single luma plane, samples in [0, 255]."""
    samples: np.ndarray

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float32)
        if self.samples.ndim != 2:
            raise ValueError(f"plane must be 2-D, got shape {self.samples.shape}")

    @property
    def height(self) -> int:
        return self.samples.shape[0]

    @property
    def width(self) -> int:
        return self.samples.shape[1]


@dataclass(frozen=True)
class MetricPair:
    psnr: float
    ssim: float


def rgb_to_y(rgb: np.ndarray, height: Optional[int] = None, width: Optional[int] = None) -> ImagePlane:
    """BT.601 studio-swing luma, Y = 16 + (65.481 R + 128.553 G + 24.966 B) / 255.

    ``rgb`` is either an H x W x 3 array or flat interleaved bytes with
    ``height`` and ``width`` given.
    """
    a = np.asarray(rgb, dtype=np.float64)
    if height is not None and width is not None:
        a = a.reshape(height, width, 3)
    if a.ndim != 3 or a.shape[2] != 3:
        raise ValueError(f"expected H x W x 3 RGB, got shape {a.shape}")
    y = 16.0 + (65.481 * a[..., 0] + 128.553 * a[..., 1] + 24.966 * a[..., 2]) / 255.0
    return ImagePlane(y)


def cubic(t: np.ndarray, a: float = -0.5) -> np.ndarray:
    """Keys cubic convolution kernel; a = -0.5 is Catmull-Rom."""
    t = np.abs(t)
    t2, t3 = t * t, t * t * t
    near = (a + 2) * t3 - (a + 3) * t2 + 1
    far = a * t3 - 5 * a * t2 + 8 * a * t - 4 * a
    return np.where(t <= 1, near, np.where(t < 2, far, 0.0))


def _resize_matrix(n_in: int, n_out: int, scale: float) -> np.ndarray:
    # widen the kernel by 1/scale when shrinking (antialiasing)
    stretch = min(scale, 1.0)
    support = 2.0 / stretch
    dst = np.arange(n_out)
    center = (dst + 0.5) / scale - 0.5
    first = np.floor(center - support).astype(int) + 1
    taps = int(math.ceil(2 * support)) + 1
    idx = first[:, None] + np.arange(taps)[None, :]
    w = cubic((center[:, None] - idx) * stretch)
    w /= w.sum(axis=1, keepdims=True)
    mat = np.zeros((n_out, n_in))
    np.add.at(mat, (np.repeat(dst, taps), np.clip(idx, 0, n_in - 1).ravel()), w.ravel())
    return mat


def bicubic_resize(plane: ImagePlane, scale, direction: Literal["up", "down"] = "up") -> ImagePlane:
    """Resize by 2 or 4 (``direction="up"``) or by 1/2, 1/4 (``"down"``).

    ``scale`` may be given as the integer factor plus a direction, or as the
    rational factor itself (``Fraction(1, 2)``, ``0.25``).
    """
    factor = Fraction(scale).limit_denominator(8)
    if factor < 1:
        direction = "down"
        factor = 1 / factor
    if factor not in (2, 4):
        raise ValueError(f"unsupported scale {scale}")
    s = float(factor) if direction == "up" else 1.0 / float(factor)
    h_out, w_out = int(round(plane.height * s)), int(round(plane.width * s))
    if h_out == 0 or w_out == 0:
        raise ValueError("resize would produce an empty plane")
    rows = _resize_matrix(plane.height, h_out, s)
    cols = _resize_matrix(plane.width, w_out, s)
    return ImagePlane(rows @ plane.samples.astype(np.float64) @ cols.T)


def _shaved(a: ImagePlane, b: ImagePlane, shave: int) -> tuple[np.ndarray, np.ndarray]:
    if a.samples.shape != b.samples.shape:
        raise ValueError(f"plane size mismatch: {a.samples.shape} vs {b.samples.shape}")
    if shave < 0 or 2 * shave >= min(a.height, a.width):
        raise ValueError(f"shave {shave} too large for {a.height}x{a.width} plane")
    sl = slice(shave, -shave if shave else None)
    return a.samples[sl, sl].astype(np.float64), b.samples[sl, sl].astype(np.float64)


def psnr(a: ImagePlane, b: ImagePlane, shave: int = 0) -> float:
    x, y = _shaved(a, b, shave)
    mse = np.mean((x - y) ** 2)
    if mse == 0:
        return math.inf
    return 10.0 * math.log10(255.0 ** 2 / mse)


def gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    r = np.arange(size) - (size - 1) / 2
    g = np.exp(-(r * r) / (2 * sigma * sigma))
    g /= g.sum()
    return g


def _filter_valid(img: np.ndarray, g: np.ndarray) -> np.ndarray:
    k = len(g)
    rows = sliding_window_view(img, k, axis=0) @ g
    return sliding_window_view(rows, k, axis=1) @ g


def ssim_maps(x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-window luminance term and contrast-structure term of SSIM (valid windows only)."""
    c1, c2 = (0.01 * 255) ** 2, (0.03 * 255) ** 2
    g = gaussian_window()
    mx, my = _filter_valid(x, g), _filter_valid(y, g)
    sxx = _filter_valid(x * x, g) - mx * mx
    syy = _filter_valid(y * y, g) - my * my
    sxy = _filter_valid(x * y, g) - mx * my
    lum = (2 * mx * my + c1) / (mx * mx + my * my + c1)
    cs = (2 * sxy + c2) / (sxx + syy + c2)
    return lum, cs


def ssim(a: ImagePlane, b: ImagePlane, shave: int = 0) -> float:
    """Mean SSIM over 11x11 Gaussian (sigma 1.5) windows fully inside the shaved plane."""
    x, y = _shaved(a, b, shave)
    if min(x.shape) < 11:
        raise ValueError("plane smaller than the 11x11 SSIM window after shaving")
    lum, cs = ssim_maps(x, y)
    return float(np.mean(lum * cs))


def measure(pred: ImagePlane, ref: ImagePlane, shave: int) -> MetricPair:
    return MetricPair(psnr(pred, ref, shave), ssim(pred, ref, shave))


def tiled_forward(
    graph: LayerGraph,
    weights: WeightStore,
    x: np.ndarray,
    tile_h: int,
    tile_w: int,
    pad: Literal["frame", "clamp"] = "frame",
    workers: int = 1,
) -> np.ndarray:
    """Run ``forward`` tile by tile and stitch the upscaled tiles.

    Every tile is extended by the receptive-field radius (m + 4). With
    ``pad="frame"`` the extension is clipped at the frame edge, so each
    layer zero-pads exactly where the full-frame run does and the result
    matches it. ``pad="clamp"`` instead replicates edge pixels outside the
    frame, which only differs within ``m + 4`` pixels of the frame border.
    """
    spec = graph.spec
    r = spec.receptive_radius
    if tile_h < 2 * r or tile_w < 2 * r:
        raise ValueError(f"tiles must be at least {2 * r} px (twice the receptive radius)")
    if pad not in ("frame", "clamp"):
        raise ValueError(f"unknown pad mode {pad!r}")
    n, h, w, _ = x.shape
    s = spec.scale
    if pad == "clamp":
        src = np.pad(x, ((0, 0), (r, r), (r, r), (0, 0)), mode="edge")
        off = r
    else:
        src, off = x, 0

    boxes = [(y0, min(y0 + tile_h, h), x0, min(x0 + tile_w, w))
             for y0 in range(0, h, tile_h) for x0 in range(0, w, tile_w)]

    def run(box):
        y0, y1, x0, x1 = box
        ya, yb = max(y0 + off - r, 0), min(y1 + off + r, src.shape[1])
        xa, xb = max(x0 + off - r, 0), min(x1 + off + r, src.shape[2])
        out = forward(graph, weights, src[:, ya:yb, xa:xb])
        ty, tx = (y0 + off - ya) * s, (x0 + off - xa) * s
        return out[:, ty:ty + (y1 - y0) * s, tx:tx + (x1 - x0) * s]

    result = np.empty((n, h * s, w * s, 1), dtype=np.result_type(x, np.float32))
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            tiles = list(pool.map(run, boxes))
    else:
        tiles = [run(b) for b in boxes]
    for (y0, y1, x0, x1), tile in zip(boxes, tiles):
        result[:, y0 * s:y1 * s, x0 * s:x1 * s] = tile
    return result


def upscale_plane(
    graph: LayerGraph,
    weights: WeightStore,
    plane: ImagePlane,
    tile: Optional[tuple[int, int]] = None,
) -> ImagePlane:
    """Super-resolve a [0, 255] plane: scale into [0, 1], run, scale back and clamp."""
    x = (plane.samples.astype(np.float32) / 255.0)[None, :, :, None]
    if tile is None:
        y = forward(graph, weights, x)
    else:
        y = tiled_forward(graph, weights, x, tile[0], tile[1])
    return ImagePlane(np.clip(y[0, :, :, 0] * 255.0, 0.0, 255.0))


def tiled_infer(graph, weights, plane: ImagePlane, tile_h: int, tile_w: int) -> ImagePlane:
    return upscale_plane(graph, weights, plane, (tile_h, tile_w))


def read_png_y(path) -> ImagePlane:
    """Load an 8-bit PNG and return its luma plane.

    Colour images go through :func:`rgb_to_y`; grayscale images are taken as
    luma already, so planes written by :func:`write_png_y` read back unchanged.
    """
    with Image.open(path) as im:
        if im.mode in ("L", "I;16", "I"):
            return ImagePlane(np.asarray(im.convert("L"), dtype=np.float32))
        rgb = np.asarray(im.convert("RGB"))
    return rgb_to_y(rgb)


def write_png_y(target, plane: ImagePlane) -> None:
    """Round, clamp and save as 8-bit grayscale; ``target`` is a path or a binary file object."""
    data = np.clip(np.rint(plane.samples), 0, 255).astype(np.uint8)
    if isinstance(target, (str, Path)):
        target = Path(target)
    Image.fromarray(data, mode="L").save(target, format="PNG")


def crop_to_multiple(plane: ImagePlane, scale: int) -> ImagePlane:
    h, w = plane.height - plane.height % scale, plane.width - plane.width % scale
    return ImagePlane(plane.samples[:h, :w])
