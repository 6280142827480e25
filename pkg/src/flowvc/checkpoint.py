"""Versioned binary checkpoints with byte-exact round-trip.

Layout (all integers little-endian):
    8 bytes   magic "FVCCKPT\\0"
    u32       format version (currently 1)
    u64       training step
    u32       config text length, then that many UTF-8 bytes
    u32       record count, then records:
        u16       name length, then UTF-8 name
        u8        ndim, then ndim x u64 dims
        f64 x n   array payload, C order

Record order is preserved on load, so save(load(p)) reproduces the file
byte for byte.
"""

import struct
from dataclasses import dataclass, field

import numpy as np

from .config import RunConfig

MAGIC = b"FVCCKPT\x00"
FORMAT_VERSION = 1


class CheckpointError(Exception):
    pass


@dataclass
class Checkpoint:
    config: RunConfig
    step: int = 0
    params: dict = field(default_factory=dict)  # name -> float64 ndarray
    version: int = FORMAT_VERSION


def save_checkpoint(ckpt: Checkpoint, path):
    if ckpt.version != FORMAT_VERSION:
        raise CheckpointError(f"cannot write format version {ckpt.version}")
    cfg_bytes = ckpt.config.to_text().encode("utf-8")
    parts = [MAGIC,
             struct.pack("<I", ckpt.version),
             struct.pack("<Q", ckpt.step),
             struct.pack("<I", len(cfg_bytes)), cfg_bytes,
             struct.pack("<I", len(ckpt.params))]
    for name, arr in ckpt.params.items():
        name_b = name.encode("utf-8")
        arr = np.asarray(arr, dtype=np.float64)
        parts.append(struct.pack("<H", len(name_b)))
        parts.append(name_b)
        parts.append(struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


class _Cursor:
    def __init__(self, buf):
        self.buf = buf
        self.pos = 0

    def take(self, n):
        if self.pos + n > len(self.buf):
            raise CheckpointError("truncated checkpoint")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_checkpoint(path) -> Checkpoint:
    try:
        with open(path, "rb") as fh:
            buf = fh.read()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint: {exc}") from exc
    cur = _Cursor(buf)
    if cur.take(len(MAGIC)) != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    (version,) = cur.unpack("<I")
    if version != FORMAT_VERSION:
        raise CheckpointError(
            f"unsupported checkpoint format version {version}")
    (step,) = cur.unpack("<Q")
    (cfg_len,) = cur.unpack("<I")
    try:
        config = RunConfig.from_text(cur.take(cfg_len).decode("utf-8"))
    except (UnicodeDecodeError, ValueError, TypeError) as exc:
        raise CheckpointError(f"bad embedded config: {exc}") from exc
    (n_records,) = cur.unpack("<I")
    params = {}
    for _ in range(n_records):
        (name_len,) = cur.unpack("<H")
        name = cur.take(name_len).decode("utf-8")
        (ndim,) = cur.unpack("<B")
        shape = cur.unpack(f"<{ndim}Q") if ndim else ()
        count = int(np.prod(shape, dtype=np.int64)) if ndim else 1
        data = np.frombuffer(cur.take(8 * count), dtype="<f8")
        params[name] = data.reshape(shape).astype(np.float64).copy()
    if cur.pos != len(buf):
        raise CheckpointError("trailing bytes after last record")
    return Checkpoint(config=config, step=step, params=params,
                      version=version)
