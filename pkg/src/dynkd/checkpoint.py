"""Binary checkpoints ("DKD1").

Little-endian layout::

    4s   magic "DKD1"
    u16  version (1)
    u32  L, number of entries in layer_dims
    u32  layer_dims[0..L-1]
    per layer l: f32 weights (row-major, dims[l+1] x dims[l]), then f32 biases
    u8   controller mode tag
    f64  alpha, alpha_kl, alpha_ce, t_learn
    f64  temperature, f64 beta, i64 seed
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .controller import MODE_TAGS, TAG_MODES, EntropyController, Mode
from .errors import BadMagicError, DataFormatError, TruncatedFileError
from .nn import NetworkParams

MAGIC = b"DKD1"
VERSION = 1
_CONTROLLER_FIELDS = ("alpha", "alpha_kl", "alpha_ce", "t_learn")


@dataclass
class Checkpoint:
    params: NetworkParams
    controller: EntropyController = field(default_factory=lambda: EntropyController(Mode.NONE))
    temperature: float = 4.0
    beta: float = 1.0
    seed: int = 0


def quantize(params: NetworkParams) -> NetworkParams:
    """Round every value to float32 precision (what a checkpoint stores)."""
    return NetworkParams(
        list(params.layer_dims),
        [w.astype(np.float32).astype(np.float64) for w in params.weights],
        [b.astype(np.float32).astype(np.float64) for b in params.biases],
    )


def checkpoint_size(layer_dims) -> int:
    """Exact file size in bytes for a network with these dims."""
    dims = list(layer_dims)
    n_values = sum(o * i + o for i, o in zip(dims[:-1], dims[1:]))
    return 4 + 2 + 4 + 4 * len(dims) + 4 * n_values + 1 + 8 * len(_CONTROLLER_FIELDS) + 8 + 8 + 8


def encode_checkpoint(ckpt: Checkpoint) -> bytes:
    p = ckpt.params
    parts = [MAGIC, struct.pack("<HI", VERSION, len(p.layer_dims))]
    parts.append(struct.pack(f"<{len(p.layer_dims)}I", *p.layer_dims))
    for w, b in zip(p.weights, p.biases):
        parts.append(np.ascontiguousarray(w, dtype="<f4").tobytes())
        parts.append(np.ascontiguousarray(b, dtype="<f4").tobytes())
    c = ckpt.controller
    parts.append(struct.pack("<B", MODE_TAGS[c.mode]))
    parts.append(struct.pack("<4d", *(float(getattr(c, f)) for f in _CONTROLLER_FIELDS)))
    parts.append(struct.pack("<ddq", float(ckpt.temperature), float(ckpt.beta), int(ckpt.seed)))
    return b"".join(parts)


class _Reader:
    def __init__(self, buf: bytes, path):
        self.buf, self.pos, self.path = buf, 0, path

    def take(self, size: int) -> bytes:
        if self.pos + size > len(self.buf):
            raise TruncatedFileError(
                f"{self.path}: truncated checkpoint, needed {self.pos + size} bytes, have {len(self.buf)}"
            )
        out = self.buf[self.pos : self.pos + size]
        self.pos += size
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def decode_checkpoint(buf: bytes, path="<bytes>", bounds: tuple[float, float] | None = None) -> Checkpoint:
    r = _Reader(buf, path)
    magic = r.take(4)
    if magic != MAGIC:
        raise BadMagicError(f"{path}: bad checkpoint magic {magic!r}, expected {MAGIC!r}")
    version, n_dims = r.unpack("<HI")
    if version != VERSION:
        raise DataFormatError(f"{path}: unsupported checkpoint version {version}, expected {VERSION}")
    if n_dims < 2:
        raise DataFormatError(f"{path}: layer count {n_dims} < 2")
    dims = list(r.unpack(f"<{n_dims}I"))
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        w = np.frombuffer(r.take(4 * fan_in * fan_out), dtype="<f4").reshape(fan_out, fan_in)
        b = np.frombuffer(r.take(4 * fan_out), dtype="<f4")
        weights.append(w.astype(np.float64))
        biases.append(b.astype(np.float64))
    (tag,) = r.unpack("<B")
    if tag not in TAG_MODES:
        raise DataFormatError(f"{path}: unknown controller mode tag {tag}")
    values = r.unpack("<4d")
    temperature, beta, seed = r.unpack("<ddq")
    if r.pos != len(buf):
        raise DataFormatError(f"{path}: {len(buf) - r.pos} trailing bytes after checkpoint")
    kwargs = dict(zip(_CONTROLLER_FIELDS, values))
    if bounds is not None:
        kwargs.update(alpha_min=bounds[0], alpha_max=bounds[1])
    controller = EntropyController(TAG_MODES[tag], **kwargs)
    controller.zero_grad()
    return Checkpoint(NetworkParams(dims, weights, biases), controller, temperature, beta, seed)


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    Path(path).write_bytes(encode_checkpoint(ckpt))


def load_checkpoint(path, bounds: tuple[float, float] | None = None) -> Checkpoint:
    return decode_checkpoint(Path(path).read_bytes(), path, bounds)
