"""Binary tensor-bundle codec used by checkpoints and precomputed embeddings.

Layout, all integers little-endian u32::

    b"CTM1" | version | tensor count
    per tensor: name length | UTF-8 name | rank | dims... | f32 data (row-major)
    config length | UTF-8 JSON config

Tensors are written as float32; float64 tensors are rounded on save.
"""

import json
import struct

import numpy as np

from .errors import FormatError

MAGIC = b"CTM1"
VERSION = 1

_U32 = struct.Struct("<I")


def encode(tensors, config):
    """Serialize ``{name: ndarray}`` (insertion order kept) and a JSON-able config."""
    out = [MAGIC, _U32.pack(VERSION), _U32.pack(len(tensors))]
    for name, arr in tensors.items():
        arr = np.asarray(arr)
        raw = name.encode("utf-8")
        out.append(_U32.pack(len(raw)))
        out.append(raw)
        out.append(_U32.pack(arr.ndim))
        out.extend(_U32.pack(d) for d in arr.shape)
        out.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    blob = json.dumps(config, sort_keys=True, separators=(",", ":")).encode("utf-8")
    out.append(_U32.pack(len(blob)))
    out.append(blob)
    return b"".join(out)


class _Reader:
    def __init__(self, buf):
        self.buf = buf
        self.pos = 0

    def take(self, n, what):
        if self.pos + n > len(self.buf):
            raise FormatError(f"truncated while reading {what}", self.pos)
        chunk = self.buf[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def u32(self, what):
        return _U32.unpack(self.take(4, what))[0]


def decode(buf):
    """Inverse of :func:`encode`; returns ``(tensors, config)``. Never returns partial data."""
    r = _Reader(memoryview(bytes(buf)))
    if bytes(r.take(4, "magic")) != MAGIC:
        raise FormatError("bad magic", 0)
    version = r.u32("version")
    if version != VERSION:
        raise FormatError(f"unsupported version {version}", 4)
    count = r.u32("tensor count")
    tensors = {}
    for _ in range(count):
        at = r.pos
        n = r.u32("name length")
        try:
            name = bytes(r.take(n, "name")).decode("utf-8")
        except UnicodeDecodeError:
            raise FormatError("tensor name is not UTF-8", at) from None
        rank = r.u32("rank")
        dims = tuple(r.u32("dimension") for _ in range(rank))
        size = int(np.prod(dims)) if dims else 1
        data = np.frombuffer(r.take(4 * size, f"data of {name!r}"), dtype="<f4")
        tensors[name] = data.astype(np.float32).reshape(dims)
    at = r.pos
    n = r.u32("config length")
    try:
        config = json.loads(bytes(r.take(n, "config")).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"config is not valid JSON: {exc}", at) from None
    if r.pos != len(r.buf):
        raise FormatError("trailing bytes after config", r.pos)
    return tensors, config


def save(path, tensors, config):
    data = encode(tensors, config)
    with open(path, "wb") as fh:
        fh.write(data)
    return data


def load(path):
    with open(path, "rb") as fh:
        return decode(fh.read())
