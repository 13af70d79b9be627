"""Parameter container shared by all decoders, plus the model file format.

Model file (little-endian)::

    magic "NDEC" | version u16 | kind u8 | n_tensors u16
    n_tensors x {name_len u8, name, is_buffer u8, ndim u8, dims u32*ndim}
    raw float32 data of every tensor in table order
    meta_len u32 | meta JSON (architecture, training config, config hash)
"""

from __future__ import annotations

import copy
import json
import struct
from pathlib import Path

import numpy as np

from ..errors import ParseError, StateError

KINDS = ("NN", "ST_NN", "LSTM", "SNN", "LINEAR")
STATEFUL = ("LSTM", "SNN")
FEATURE_MODE = {"NN": "frame", "ST_NN": "segmented", "LSTM": "frame", "SNN": "binary", "LINEAR": "frame"}


def uniform_init(rng, shape, fan_in, dtype=np.float32, gain=1.0):
    k = gain / np.sqrt(fan_in)
    return rng.uniform(-k, k, size=shape).astype(dtype)


class DecoderModel:
    """Named parameters, non-trainable buffers and a JSON-able ``meta`` dict.

    Subclasses implement ``forward`` / ``backward``; gradients come back as a
    dict keyed like ``params``.
    """

    kind = ""
    stateful = False

    def __init__(self, params: dict, buffers: dict | None = None, meta: dict | None = None):
        self.params = params
        self.buffers = buffers or {}
        self.meta = meta or {}

    @property
    def dtype(self):
        return next(iter(self.params.values())).dtype

    @property
    def n_inputs(self) -> int:
        return int(self.meta["n_inputs"])

    def decay_keys(self) -> list[str]:
        """Parameters subject to decoupled weight decay (weight matrices only)."""
        return [k for k, v in self.params.items() if v.ndim == 2]

    def astype(self, dtype) -> "DecoderModel":
        m = self.copy()
        m.params = {k: v.astype(dtype) for k, v in m.params.items()}
        m.buffers = {k: v.astype(dtype) for k, v in m.buffers.items()}
        return m

    def copy(self) -> "DecoderModel":
        m = copy.copy(self)
        m.params = {k: v.copy() for k, v in self.params.items()}
        m.buffers = {k: v.copy() for k, v in self.buffers.items()}
        m.meta = copy.deepcopy(self.meta)
        return m

    def n_parameters(self, include_buffers: bool = True) -> int:
        n = sum(v.size for v in self.params.values())
        if include_buffers:
            n += sum(v.size for v in self.buffers.values())
        return int(n)

    def zero_grads(self) -> dict:
        return {k: np.zeros_like(v) for k, v in self.params.items()}

    @staticmethod
    def _require_cache(cache):
        if not cache:
            raise StateError("backward called without a forward cache")

    def _check_width(self, width):
        from ..errors import DomainError

        if width != self.n_inputs:
            raise DomainError(f"{self.kind} model expects {self.n_inputs} inputs, got {width}")


_HEAD = struct.Struct("<4sHBH")


def save_model(model: DecoderModel, path) -> None:
    entries = [(k, v, 0) for k, v in model.params.items()] + [(k, v, 1) for k, v in model.buffers.items()]
    out = bytearray(_HEAD.pack(b"NDEC", 1, KINDS.index(model.kind), len(entries)))
    for name, v, buf in entries:
        nb = name.encode()
        out += struct.pack("<B", len(nb)) + nb + struct.pack("<BB", buf, v.ndim)
        out += struct.pack(f"<{v.ndim}I", *v.shape)
    for _, v, _ in entries:
        out += np.ascontiguousarray(v, dtype="<f4").tobytes()
    meta = json.dumps(model.meta, sort_keys=True).encode()
    out += struct.pack("<I", len(meta)) + meta
    Path(path).write_bytes(bytes(out))


def load_model(path) -> DecoderModel:
    from . import registry

    data = Path(path).read_bytes()
    if len(data) < _HEAD.size:
        raise ParseError("truncated model header", offset=len(data))
    magic, version, kind, n = _HEAD.unpack_from(data)
    if magic != b"NDEC":
        raise ParseError(f"bad magic {magic!r}", offset=0)
    off = _HEAD.size
    table = []
    try:
        for _ in range(n):
            (ln,) = struct.unpack_from("<B", data, off)
            off += 1
            name = data[off:off + ln].decode()
            off += ln
            buf, ndim = struct.unpack_from("<BB", data, off)
            off += 2
            shape = struct.unpack_from(f"<{ndim}I", data, off)
            off += 4 * ndim
            table.append((name, buf, shape))
        params, buffers = {}, {}
        for name, buf, shape in table:
            size = int(np.prod(shape, dtype=np.int64))
            arr = np.frombuffer(data, "<f4", size, off).reshape(shape).astype(np.float32)
            off += 4 * size
            (buffers if buf else params)[name] = arr
        (ml,) = struct.unpack_from("<I", data, off)
        off += 4
        meta = json.loads(data[off:off + ml].decode())
    except (struct.error, ValueError, UnicodeDecodeError) as exc:
        raise ParseError(f"corrupt model file: {exc}", offset=off) from None
    cls = registry()[KINDS[kind]]
    return cls(params, buffers, meta)
