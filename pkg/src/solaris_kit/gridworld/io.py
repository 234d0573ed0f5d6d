"""Episode serialization: SOLG observation blobs and NDJSON metadata.

One episode is two files sharing a stem: `<id>.ndjson` holds a header
record followed by one action record per tick per player (player-major),
and `<id>.solg` holds the raw frames. Blob layout: magic "SOLG",
version u16, P u8, T u32, H u16, W u16, C u16 (all little-endian), then
float32 little-endian data ordered [player][tick][row][col][channel].
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .episodes import EpisodeLog
from .world import ACTION_KEYS, blank_action

SOLG_MAGIC = b"SOLG"
SOLG_VERSION = 1
_HEADER = struct.Struct("<4sHBIHHH")


def write_blob(path, frames: np.ndarray) -> None:
    arr = np.ascontiguousarray(frames, dtype="<f4")
    P, T, H, W, C = arr.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(SOLG_MAGIC, SOLG_VERSION, P, T, H, W, C))
        fh.write(arr.tobytes())


def read_blob(path) -> np.ndarray:
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        magic, version, P, T, H, W, C = _HEADER.unpack(head)
        if magic != SOLG_MAGIC:
            raise ValueError(f"{path}: not a SOLG blob")
        if version != SOLG_VERSION:
            raise ValueError(f"{path}: unsupported blob version {version}")
        data = np.frombuffer(fh.read(), dtype="<f4")
    expect = P * T * H * W * C
    if data.size != expect:
        raise ValueError(f"{path}: truncated blob ({data.size} of {expect} values)")
    return data.reshape(P, T, H, W, C).astype(np.float32)


def _action_line(player: int, tick: int, a: dict) -> str:
    rec = {"player": player, "tick": tick}
    for k in ACTION_KEYS:
        v = a[k]
        rec[k] = [float(v[0]), float(v[1])] if k == "camera" else int(v)
    return json.dumps(rec)


def save_episode(log: EpisodeLog, out_dir) -> str:
    """Write the episode pair of files; returns the metadata path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    meta_path = out / f"{log.episode_id}.ndjson"
    blob_path = out / f"{log.episode_id}.solg"
    header = {
        "episode_id": log.episode_id,
        "episode_type": log.episode_type,
        "world_kind": log.world_kind,
        "seed": log.seed,
        "length": log.length,
        "aborted": log.aborted,
    }
    lines = [json.dumps(header)]
    for p in range(log.frames.shape[0]):
        for t, a in enumerate(log.actions[p]):
            lines.append(_action_line(p, t, a))
    meta_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    write_blob(blob_path, log.frames)
    return str(meta_path)


def load_episode(meta_path) -> EpisodeLog:
    meta_path = Path(meta_path)
    lines = meta_path.read_text(encoding="utf-8").splitlines()
    header = json.loads(lines[0])
    frames = read_blob(meta_path.with_suffix(".solg"))
    P, T = frames.shape[0], frames.shape[1]
    actions = [[blank_action() for _ in range(T)] for _ in range(P)]
    for line in lines[1:]:
        rec = json.loads(line)
        a = blank_action()
        for k in ACTION_KEYS:
            a[k] = tuple(rec[k]) if k == "camera" else int(rec[k])
        actions[rec["player"]][rec["tick"]] = a
    return EpisodeLog(
        episode_id=header["episode_id"],
        episode_type=header["episode_type"],
        world_kind=header["world_kind"],
        seed=header["seed"],
        frames=frames,
        actions=actions,
        aborted=header["aborted"],
        length=header["length"],
    )


def write_manifest(entries: list, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for e in entries:
            fh.write(json.dumps(e) + "\n")


def load_manifest(path) -> list:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]
