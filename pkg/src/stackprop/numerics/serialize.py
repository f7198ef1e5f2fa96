"""Binary checkpoint container.

Layout (all integers little-endian)::

    magic            8 bytes  b"STKPROP\\x00"
    version          uint32
    header length    uint64   followed by that many bytes of UTF-8 JSON
    parameter count  uint32
    per parameter:
        name length  uint32, name UTF-8
        ndim         uint32, then ndim x uint64 extents
        value        float64 little-endian, row-major
        ema          float64 little-endian, row-major

The JSON header carries whatever metadata the caller supplies (model
configuration and vocabularies).
"""

from __future__ import annotations

import io
import json
import struct
from typing import BinaryIO, Iterable

import numpy as np

from .autodiff import Parameter

MAGIC = b"STKPROP\x00"
FORMAT_VERSION = 1


class CheckpointFormatError(ValueError):
    pass


def write_parameters(f: BinaryIO, params: Iterable[Parameter], header: dict) -> None:
    params = list(params)
    names = [p.name for p in params]
    if len(set(names)) != len(names):
        raise ValueError("parameter names must be unique")
    blob = json.dumps(header, sort_keys=True, ensure_ascii=False).encode("utf-8")
    f.write(MAGIC)
    f.write(struct.pack("<IQ", FORMAT_VERSION, len(blob)))
    f.write(blob)
    f.write(struct.pack("<I", len(params)))
    for p in params:
        name = p.name.encode("utf-8")
        f.write(struct.pack("<I", len(name)))
        f.write(name)
        f.write(struct.pack("<I", p.value.ndim))
        f.write(struct.pack(f"<{p.value.ndim}Q", *p.value.shape))
        f.write(np.ascontiguousarray(p.value, dtype="<f8").tobytes())
        f.write(np.ascontiguousarray(p.ema, dtype="<f8").tobytes())


def _read_exact(f: BinaryIO, n: int) -> bytes:
    data = f.read(n)
    if len(data) != n:
        raise CheckpointFormatError("checkpoint is truncated")
    return data


def read_parameters(f: BinaryIO) -> tuple[list[Parameter], dict]:
    magic = f.read(len(MAGIC))
    if magic != MAGIC:
        raise CheckpointFormatError("not a checkpoint file (bad magic marker)")
    version, hlen = struct.unpack("<IQ", _read_exact(f, 12))
    if version != FORMAT_VERSION:
        raise CheckpointFormatError(
            f"checkpoint format version {version} is not supported (expected {FORMAT_VERSION})"
        )
    header = json.loads(_read_exact(f, hlen).decode("utf-8"))
    (count,) = struct.unpack("<I", _read_exact(f, 4))
    params = []
    for _ in range(count):
        (nlen,) = struct.unpack("<I", _read_exact(f, 4))
        name = _read_exact(f, nlen).decode("utf-8")
        (ndim,) = struct.unpack("<I", _read_exact(f, 4))
        shape = struct.unpack(f"<{ndim}Q", _read_exact(f, 8 * ndim))
        size = int(np.prod(shape)) if ndim else 1
        value = np.frombuffer(_read_exact(f, 8 * size), dtype="<f8").reshape(shape)
        ema = np.frombuffer(_read_exact(f, 8 * size), dtype="<f8").reshape(shape)
        p = Parameter(name, value.astype(np.float64))
        p.ema = ema.astype(np.float64)
        params.append(p)
    if f.read(1):
        raise CheckpointFormatError("trailing bytes after last parameter")
    return params, header


def dumps(params: Iterable[Parameter], header: dict) -> bytes:
    buf = io.BytesIO()
    write_parameters(buf, params, header)
    return buf.getvalue()


def loads(data: bytes) -> tuple[list[Parameter], dict]:
    return read_parameters(io.BytesIO(data))
