"""SESR1 binary weight files.

Layout (all little-endian)::

    magic      6 bytes  b"SESR1\\0"
    version    u16      1
    scale      u8
    f, m, p    u16 x 3
    variant    u8       bit0 linear blocks, bit1 short residuals,
                        bit2 input residual, bit3 ReLU (0 = PReLU),
                        bit4 biases present
    form       u8       0 training, 1 collapsed
    count      u32
    count x { u16 name length, UTF-8 name, u8 rank, rank x u32 dims,
              float32 payload }
"""
from __future__ import annotations

import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .graph import COLLAPSED, TRAINING, NetworkSpec, WeightStore

MAGIC = b"SESR1\0"
VERSION = 1
_HEADER = struct.Struct("<6sHBHHHBBI")
FORMS = {TRAINING: 0, COLLAPSED: 1}


class WeightFileError(ValueError):
    pass


def variant_bits(spec: NetworkSpec) -> int:
    return (spec.use_linear_blocks
            | spec.use_short_residuals << 1
            | spec.use_input_residual << 2
            | (spec.activation == "relu") << 3
            | spec.bias << 4)


def spec_from_bits(f: int, m: int, scale: int, p: int, bits: int) -> NetworkSpec:
    if bits >> 5:
        raise WeightFileError(f"unknown variant bits {bits:#04x}")
    return NetworkSpec(f=f, m=m, scale=scale, p=p,
                       use_linear_blocks=bool(bits & 1),
                       use_short_residuals=bool(bits & 2),
                       use_input_residual=bool(bits & 4),
                       activation="relu" if bits & 8 else "prelu",
                       bias=bool(bits & 16))


def dumps(spec: NetworkSpec, form: str, weights: WeightStore) -> bytes:
    parts = [_HEADER.pack(MAGIC, VERSION, spec.scale, spec.f, spec.m, spec.p,
                          variant_bits(spec), FORMS[form], len(weights))]
    for name, arr in weights.items():
        raw = name.encode("utf-8")
        arr = np.asarray(arr)
        parts.append(struct.pack("<H", len(raw)) + raw)
        parts.append(struct.pack(f"<B{arr.ndim}I", arr.ndim, *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return b"".join(parts)


def loads(data: bytes) -> tuple[NetworkSpec, str, WeightStore]:
    if len(data) < _HEADER.size:
        raise WeightFileError("file too short for SESR1 header")
    magic, version, scale, f, m, p, bits, form, count = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise WeightFileError("bad magic, not an SESR1 file")
    if version != VERSION:
        raise WeightFileError(f"unsupported version {version}")
    forms = {v: k for k, v in FORMS.items()}
    if form not in forms:
        raise WeightFileError(f"unknown form byte {form}")
    try:
        spec = spec_from_bits(f, m, scale, p, bits)
    except ValueError as e:
        raise WeightFileError(str(e)) from None

    pos = _HEADER.size
    weights: WeightStore = {}
    try:
        for _ in range(count):
            (n,) = struct.unpack_from("<H", data, pos)
            name = data[pos + 2:pos + 2 + n].decode("utf-8")
            pos += 2 + n
            (rank,) = struct.unpack_from("<B", data, pos)
            dims = struct.unpack_from(f"<{rank}I", data, pos + 1)
            pos += 1 + 4 * rank
            size = int(np.prod(dims, dtype=np.int64)) * 4
            if pos + size > len(data):
                raise WeightFileError(f"payload of {name!r} runs past end of file")
            if name in weights:
                raise WeightFileError(f"duplicate tensor name {name!r}")
            weights[name] = np.frombuffer(data, "<f4", size // 4, pos).astype(np.float32).reshape(dims)
            pos += size
    except struct.error as e:
        raise WeightFileError(f"truncated file: {e}") from None
    if pos != len(data):
        raise WeightFileError(f"{len(data) - pos} trailing bytes")
    return spec, forms[form], weights


def save(path, spec: NetworkSpec, form: str, weights: WeightStore) -> None:
    """Write atomically: a temp file in the target directory is renamed into place."""
    path = Path(path)
    data = dumps(spec, form, weights)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load(path) -> tuple[NetworkSpec, str, WeightStore]:
    return loads(Path(path).read_bytes())
