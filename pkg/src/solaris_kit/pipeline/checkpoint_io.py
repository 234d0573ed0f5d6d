"""Binary checkpoint format: SOLC header plus named float32 records.

Layout, all little-endian:
    magic "SOLC" | version u16 | stage (u8 len + utf8)
    | step u32 | config hash (u8 len + utf8) | record count u32
    | records: name (u16 len + utf8), ndim u8, dims u32 each, f32 payload

Deterministic writes (insertion-ordered records, exact float bytes) make
save -> load -> save byte-identical, which the resume test leans on.
"""

from __future__ import annotations

import struct
from collections import OrderedDict
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAGIC = b"SOLC"
VERSION = 1


@dataclass
class Checkpoint:
    stage: str
    step: int
    config_hash: str
    tensors: "OrderedDict[str, np.ndarray]"


def save_checkpoint(path, stage: str, step: int, config_hash: str, tensors) -> str:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    stage_b = stage.encode()
    hash_b = config_hash.encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<H", VERSION))
        fh.write(struct.pack("<B", len(stage_b)))
        fh.write(stage_b)
        fh.write(struct.pack("<I", int(step)))
        fh.write(struct.pack("<B", len(hash_b)))
        fh.write(hash_b)
        fh.write(struct.pack("<I", len(tensors)))
        for name, arr in tensors.items():
            arr = np.ascontiguousarray(arr, dtype="<f4")
            name_b = name.encode()
            fh.write(struct.pack("<H", len(name_b)))
            fh.write(name_b)
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes())
    return str(path)


def load_checkpoint(path) -> Checkpoint:
    data = Path(path).read_bytes()
    off = 0

    def take(n: int) -> bytes:
        nonlocal off
        if off + n > len(data):
            raise ValueError(f"truncated checkpoint {path}")
        out = data[off : off + n]
        off += n
        return out

    if take(4) != MAGIC:
        raise ValueError(f"{path} is not a SOLC checkpoint")
    (version,) = struct.unpack("<H", take(2))
    if version != VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    (stage_len,) = struct.unpack("<B", take(1))
    stage = take(stage_len).decode()
    (step,) = struct.unpack("<I", take(4))
    (hash_len,) = struct.unpack("<B", take(1))
    config_hash = take(hash_len).decode()
    (count,) = struct.unpack("<I", take(4))

    tensors: "OrderedDict[str, np.ndarray]" = OrderedDict()
    for _ in range(count):
        (name_len,) = struct.unpack("<H", take(2))
        name = take(name_len).decode()
        (ndim,) = struct.unpack("<B", take(1))
        shape = struct.unpack(f"<{ndim}I", take(4 * ndim)) if ndim else ()
        n_items = int(np.prod(shape, dtype=np.int64)) if ndim else 1
        arr = np.frombuffer(take(4 * n_items), dtype="<f4").reshape(shape)
        tensors[name] = arr.copy()  # writable, native-owned
    if off != len(data):
        raise ValueError(f"{path} has {len(data) - off} trailing bytes")
    return Checkpoint(stage=stage, step=step, config_hash=config_hash, tensors=tensors)
