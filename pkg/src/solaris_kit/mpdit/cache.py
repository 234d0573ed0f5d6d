"""Rolling per-layer key/value cache for frame-by-frame generation."""

from __future__ import annotations

from ..substrate import Tensor


class KvCache:
    """Holds up to `window_frames` frame blocks of keys/values per layer.

    Entries are Tensors: detached arrays during gradient-free generation,
    live graph nodes when a full-tape trainer keeps the cache path
    differentiable. `frames_seen` counts every append ever made, which is
    the absolute frame index of the next block to generate.
    """

    def __init__(self, layers: int, window_frames: int):
        if layers < 1 or window_frames < 1:
            raise ValueError("need at least one layer and a one-frame window")
        self.window_frames = window_frames
        self._kv: list[list[tuple[Tensor, Tensor]]] = [[] for _ in range(layers)]
        self.frames_seen = 0

    @property
    def layers(self) -> int:
        return len(self._kv)

    @property
    def frame_count(self) -> int:
        return len(self._kv[0])

    def context(self, layer: int) -> list[tuple[Tensor, Tensor]]:
        """Blocks a new frame may attend: the newest window_frames - 1."""
        keep = self.window_frames - 1
        if keep <= 0:
            return []
        return self._kv[layer][-keep:]

    def append(self, layer: int, k: Tensor, v: Tensor) -> None:
        entries = self._kv[layer]
        entries.append((k, v))
        if len(entries) > self.window_frames:
            entries.pop(0)
        if layer == self.layers - 1:
            self.frames_seen += 1

    def __repr__(self):
        return f"<KvCache layers={self.layers} frames={self.frame_count}/{self.window_frames}>"
