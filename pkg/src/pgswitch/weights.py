"""Binary checkpoint container for ModelParams.

Layout (all integers little-endian):

    magic      4 bytes  b"PGSW"
    version    uint32
    meta_len   uint32, then meta_len bytes of UTF-8 JSON
               {"config": {...}, "vocab": [content tokens], "extra": {...}}
    n_tensors  uint32
    per tensor:
        name_len uint16, name (UTF-8)
        ndim     uint8, dims uint32 * ndim
        values   float64 little-endian, row-major
    crc32      uint32 over every preceding byte
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import asdict

import numpy as np

from .model import ModelConfig, ModelParams
from .vocab import Vocabulary

MAGIC = b"PGSW"
VERSION = 1


class WeightsFormatError(ValueError):
    pass


def dumps(params: ModelParams, extra: dict | None = None) -> bytes:
    meta = json.dumps({"config": asdict(params.config), "vocab": params.vocab.content_tokens,
                       "extra": extra or {}}, sort_keys=True).encode("utf-8")
    parts = [MAGIC, struct.pack("<II", VERSION, len(meta)), meta,
             struct.pack("<I", len(params.tensors))]
    for name in sorted(params.tensors):
        arr = np.ascontiguousarray(params.tensors[name], dtype="<f8")
        raw = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)) + raw)
        parts.append(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes(order="C"))
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


class _Reader:
    def __init__(self, data: bytes, limit: int):
        self.data, self.pos, self.limit = data, 0, limit

    def take(self, n: int) -> bytes:
        if self.pos + n > self.limit:
            raise WeightsFormatError(f"truncated container at byte {self.pos}")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def loads(data: bytes) -> tuple[ModelParams, dict]:
    if len(data) < 16 or data[:4] != MAGIC:
        raise WeightsFormatError("not a weights container (bad magic)")
    (stored,) = struct.unpack("<I", data[-4:])
    if zlib.crc32(data[:-4]) != stored:
        raise WeightsFormatError("checksum mismatch")
    r = _Reader(data, len(data) - 4)
    r.take(4)
    version, meta_len = r.unpack("<II")
    if version != VERSION:
        raise WeightsFormatError(f"unsupported container version {version}")
    try:
        meta = json.loads(r.take(meta_len).decode("utf-8"))
        config = ModelConfig(**meta["config"])
        vocab = Vocabulary(meta["vocab"])
    except (ValueError, KeyError, TypeError) as e:
        raise WeightsFormatError(f"bad metadata: {e}") from None
    (n,) = r.unpack("<I")
    tensors: dict[str, np.ndarray] = {}
    for _ in range(n):
        (ln,) = r.unpack("<H")
        name = r.take(ln).decode("utf-8")
        (ndim,) = r.unpack("<B")
        dims = r.unpack(f"<{ndim}I")
        count = int(np.prod(dims, dtype=np.int64))
        arr = np.frombuffer(r.take(8 * count), dtype="<f8").astype(np.float64).reshape(dims)
        if name in tensors:
            raise WeightsFormatError(f"tensor {name!r} appears more than once")
        tensors[name] = arr
    if r.pos != r.limit:
        raise WeightsFormatError(f"{r.limit - r.pos} trailing bytes before checksum")
    try:
        params = ModelParams(config, vocab, tensors)
    except ValueError as e:
        raise WeightsFormatError(str(e)) from None
    return params, meta.get("extra", {})


def save_weights(params: ModelParams, path, extra: dict | None = None) -> None:
    with open(path, "wb") as fh:
        fh.write(dumps(params, extra))


def load_weights(path) -> ModelParams:
    with open(path, "rb") as fh:
        data = fh.read()
    try:
        return loads(data)[0]
    except WeightsFormatError as e:
        raise WeightsFormatError(f"{path}: {e}") from None
