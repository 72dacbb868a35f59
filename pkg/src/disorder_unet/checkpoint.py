"""Binary checkpoint container.

Layout (all integers little-endian)::

    b"DUNL"  u16 version
    u32 n    n bytes of UTF-8 JSON: the ModelConfig, keys are the field tags
    u32 count
    count x (u16 name_len, name, u32 ndim, ndim x u32 dim, float64 payload)

Tensors named ``standardizer.*`` carry the fitted input standardizer, if any.
"""

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .datasets import EmbeddingStandardizer
from .errors import FormatError, MagicError, TruncationError, VersionError
from .unet import ModelConfig, param_shapes

MAGIC = b"DUNL"
VERSION = 1
_STD_PREFIX = "standardizer."


@dataclass
class Checkpoint:
    config: ModelConfig
    params: dict
    standardizer: EmbeddingStandardizer | None = None


def encode_checkpoint(config, params, standardizer=None):
    cfg = json.dumps(config.to_dict(), sort_keys=True, separators=(",", ":")).encode("utf-8")
    tensors = list(params.items())
    if standardizer is not None:
        tensors += [(_STD_PREFIX + "mean", standardizer.mean_), (_STD_PREFIX + "scale", standardizer.scale_)]
    parts = [MAGIC, struct.pack("<H", VERSION), struct.pack("<I", len(cfg)), cfg, struct.pack("<I", len(tensors))]
    for name, arr in tensors:
        arr = np.asarray(arr, dtype="<f8")
        raw = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)) + raw)
        parts.append(struct.pack("<I", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes(order="C"))
    return b"".join(parts)


def save_params(path, config, params, standardizer=None):
    """Write a checkpoint; the write goes through a temp file so no partial file is left behind."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(encode_checkpoint(config, params, standardizer))
    tmp.replace(path)


class _Reader:
    def __init__(self, data, path):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, n, what):
        if self.pos + n > len(self.data):
            raise TruncationError(f"truncated while reading {what}", self.path, self.pos)
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt, what):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def decode_checkpoint(data, path=None):
    r = _Reader(data, path)
    if len(data) >= 4 and data[:4] != MAGIC:
        raise MagicError(f"bad magic {data[:4]!r}, expected {MAGIC!r}", path, 0)
    r.take(4, "magic")
    (version,) = r.unpack("<H", "version")
    if version != VERSION:
        raise VersionError(f"unsupported checkpoint version {version}", path, 4)
    (n,) = r.unpack("<I", "config length")
    start = r.pos
    try:
        config = ModelConfig.from_dict(json.loads(r.take(n, "config").decode("utf-8")))
    except (ValueError, TypeError) as exc:
        if isinstance(exc, TruncationError):
            raise
        raise FormatError(f"invalid config block: {exc}", path, start) from None
    (count,) = r.unpack("<I", "tensor count")
    tensors = {}
    for _ in range(count):
        (nlen,) = r.unpack("<H", "tensor name length")
        at = r.pos
        try:
            name = r.take(nlen, "tensor name").decode("utf-8")
        except UnicodeDecodeError:
            raise FormatError("tensor name is not UTF-8", path, at) from None
        (ndim,) = r.unpack("<I", f"rank of {name}")
        shape = r.unpack(f"<{ndim}I", f"shape of {name}")
        size = int(np.prod(shape, dtype=np.int64)) if ndim else 1
        buf = r.take(8 * size, f"values of {name}")
        tensors[name] = np.frombuffer(buf, dtype="<f8").reshape(shape).astype(np.float64)
    if r.pos != len(data):
        raise FormatError(f"{len(data) - r.pos} trailing bytes after last tensor", path, r.pos)
    standardizer = None
    if _STD_PREFIX + "mean" in tensors:
        standardizer = EmbeddingStandardizer()
        standardizer.mean_ = tensors.pop(_STD_PREFIX + "mean")
        standardizer.scale_ = tensors.pop(_STD_PREFIX + "scale")
        standardizer.n_samples_seen_ = None
    expected = param_shapes(config)
    if set(tensors) != set(expected):
        raise FormatError(f"tensor names do not match the config: {sorted(set(tensors) ^ set(expected))[:5]}", path)
    for name, shape in expected.items():
        if tensors[name].shape != tuple(shape):
            raise FormatError(f"tensor {name} has shape {tensors[name].shape}, expected {shape}", path)
    params = {name: tensors[name] for name in expected}
    return Checkpoint(config, params, standardizer)


def load_checkpoint(path):
    return decode_checkpoint(Path(path).read_bytes(), path)


def load_params(path):
    ckpt = load_checkpoint(path)
    return ckpt.config, ckpt.params
