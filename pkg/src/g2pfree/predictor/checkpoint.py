"""Binary checkpoint format (little-endian)::

    "SQ2S" u32 version=1
    config: u32 d_model, n_heads, n_layers_enc, n_layers_dec, d_ff,
            unit_vocab, max_src_len, max_tgt_len; u64 seed
    u32 tensor_count
    per tensor: u16 name_len, name (UTF-8), u8 rank, u32 dims[rank],
                f32 data[prod(dims)]
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..corpus import PathLike
from ..errors import BadMagic, ShapeMismatchOnLoad, TrailingBytes, TruncatedFile, UnknownVersion
from .model import ModelConfig, Seq2SeqModel, parameter_shapes

MAGIC = b"SQ2S"
VERSION = 1
_CONFIG_FIELDS = (
    "d_model", "n_heads", "n_layers_enc", "n_layers_dec", "d_ff",
    "unit_vocab", "max_src_len", "max_tgt_len",
)
_HEADER = struct.Struct("<4sI")
_CONFIG = struct.Struct("<" + "I" * len(_CONFIG_FIELDS) + "Q")


def save_checkpoint(model: Seq2SeqModel, path: PathLike) -> None:
    cfg = model.config
    parts = [
        _HEADER.pack(MAGIC, VERSION),
        _CONFIG.pack(*(getattr(cfg, f) for f in _CONFIG_FIELDS), cfg.seed),
        struct.pack("<I", len(model.params)),
    ]
    for name, p in model.params.items():
        encoded = name.encode("utf-8")
        value = p.value
        parts.append(struct.pack("<H", len(encoded)) + encoded)
        parts.append(struct.pack("<B", value.ndim) + struct.pack(f"<{value.ndim}I", *value.shape))
        parts.append(value.astype("<f4").tobytes())
    Path(path).write_bytes(b"".join(parts))


class _Reader:
    def __init__(self, raw: bytes, path):
        self.raw = raw
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.raw):
            raise TruncatedFile(f"{self.path}: unexpected end of checkpoint at byte {len(self.raw)}")
        chunk = self.raw[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str | struct.Struct):
        s = fmt if isinstance(fmt, struct.Struct) else struct.Struct(fmt)
        return s.unpack(self.take(s.size))


def load_checkpoint(path: PathLike, expected: ModelConfig | None = None) -> Seq2SeqModel:
    """Load a checkpoint; ``expected`` (if given) must match the embedded config."""
    r = _Reader(Path(path).read_bytes(), path)
    if r.raw[:4] != MAGIC:
        raise BadMagic(f"{path}: expected magic {MAGIC!r}, got {r.raw[:4]!r}")
    _, version = r.unpack(_HEADER)
    if version != VERSION:
        raise UnknownVersion(f"{path}: checkpoint version {version}")
    fields = r.unpack(_CONFIG)
    cfg = ModelConfig(**dict(zip(_CONFIG_FIELDS, fields[:-1])), seed=fields[-1])
    if expected is not None and expected != cfg:
        diffs = [
            f"{f}: file={getattr(cfg, f)} expected={getattr(expected, f)}"
            for f in (*_CONFIG_FIELDS, "seed")
            if getattr(cfg, f) != getattr(expected, f)
        ]
        raise ShapeMismatchOnLoad(f"{path}: config mismatch ({'; '.join(diffs)})")
    shapes = parameter_shapes(cfg)
    (count,) = r.unpack("<I")
    if count != len(shapes):
        raise ShapeMismatchOnLoad(f"{path}: {count} tensors, config implies {len(shapes)}")
    values = {}
    for _ in range(count):
        (name_len,) = r.unpack("<H")
        name = r.take(name_len).decode("utf-8")
        (rank,) = r.unpack("<B")
        dims = r.unpack(f"<{rank}I")
        if name not in shapes or tuple(dims) != shapes[name]:
            raise ShapeMismatchOnLoad(f"{path}: tensor {name!r} has shape {dims}, expected {shapes.get(name)}")
        if name in values:
            raise ShapeMismatchOnLoad(f"{path}: tensor {name!r} appears twice")
        n = int(np.prod(dims, dtype=np.int64))
        values[name] = np.frombuffer(r.take(4 * n), dtype="<f4").reshape(dims).astype(np.float32)
    if r.pos != len(r.raw):
        raise TrailingBytes(f"{path}: {len(r.raw) - r.pos} bytes after last tensor")
    return Seq2SeqModel(cfg, values)
