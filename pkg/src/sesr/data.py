"""Toy datasets of (low-res, high-res) Y-plane pairs with values in [0, 1]."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .evaluate import ImagePlane, bicubic_resize, crop_to_multiple, read_png_y


def nearest_neighbor_pairs(count: int, lr_size: int, scale: int, seed: int = 0):
    """Random low-res planes whose high-res targets are exact pixel replications."""
    rng = np.random.default_rng(seed)
    pairs = []
    for _ in range(count):
        lr = rng.random((lr_size, lr_size))
        pairs.append((lr, np.kron(lr, np.ones((scale, scale)))))
    return pairs


def texture(size: int, rng: np.random.Generator, waves: int = 12) -> np.ndarray:
    """Sum of random oriented sinusoids plus a few hard-edged discs, rescaled to [0, 1]."""
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    img = np.zeros((size, size))
    for _ in range(waves):
        freq = rng.uniform(0.05, 0.9)
        theta = rng.uniform(0, np.pi)
        phase = rng.uniform(0, 2 * np.pi)
        img += rng.uniform(0.3, 1.0) * np.sin(freq * (xx * np.cos(theta) + yy * np.sin(theta)) + phase)
    for _ in range(3):
        cy, cx = rng.uniform(0, size, 2)
        rad = rng.uniform(size / 10, size / 4)
        img += rng.uniform(-2, 2) * ((yy - cy) ** 2 + (xx - cx) ** 2 < rad * rad)
    img -= img.min()
    return img / max(img.max(), 1e-12)


def cartoon(size: int, rng: np.random.Generator, shapes: int = 14) -> np.ndarray:
    """Piecewise-constant plane of overlapping discs, boxes and bars with hard edges."""
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    img = np.full((size, size), rng.uniform(0.2, 0.8))
    for _ in range(shapes):
        kind = rng.integers(3)
        cy, cx = rng.uniform(0, size, 2)
        if kind == 0:
            rad = rng.uniform(size / 16, size / 5)
            mask = (yy - cy) ** 2 + (xx - cx) ** 2 < rad * rad
        elif kind == 1:
            hh, hw = rng.uniform(size / 16, size / 4, 2)
            mask = (np.abs(yy - cy) < hh) & (np.abs(xx - cx) < hw)
        else:
            theta = rng.uniform(0, np.pi)
            dist = (xx - cx) * np.cos(theta) + (yy - cy) * np.sin(theta)
            mask = np.abs(dist) < rng.uniform(0.6, 2.5)
        img[mask] = rng.uniform(0, 1)
    return img


def binary(size: int, rng: np.random.Generator) -> np.ndarray:
    """Two-level plane: a random smooth field thresholded at its median."""
    field = texture(size, rng, waves=6)
    return (field > np.median(field)).astype(np.float64)


def bicubic_pairs(count: int, hr_size: int, scale: int, seed: int = 0, kind: str = "texture"):
    """Synthetic high-res targets (``"texture"`` or ``"cartoon"``), bicubic-downscaled for the inputs."""
    make = {"texture": texture, "cartoon": cartoon, "binary": binary}[kind]
    rng = np.random.default_rng(seed)
    pairs = []
    for _ in range(count):
        hr = make(hr_size, rng)
        lr = bicubic_resize(ImagePlane(hr * 255.0), scale, "down").samples / 255.0
        pairs.append((lr.astype(np.float64), hr))
    return pairs


def png_pairs(directory, scale: int):
    """Pairs from a directory of PNGs.

    Uses ``hr/`` and ``lr/`` subdirectories with matching file names when
    ``lr/`` exists; otherwise every PNG (in ``hr/`` or the directory itself)
    is a high-res target and its input is made by bicubic downscaling.
    """
    root = Path(directory)
    hr_dir = root / "hr" if (root / "hr").is_dir() else root
    lr_dir = root / "lr"
    pairs = []
    for path in sorted(hr_dir.glob("*.png")):
        hr = crop_to_multiple(read_png_y(path), scale)
        if lr_dir.is_dir():
            lr = read_png_y(lr_dir / path.name)
        else:
            lr = bicubic_resize(hr, scale, "down")
        pairs.append((path.stem, lr, hr))
    if not pairs:
        raise FileNotFoundError(f"no PNG files found in {hr_dir}")
    return pairs
