"""Attention layouts at frame-block granularity.

A frame block holds every player's tokens for one time index, so a mask
over T frames with tokens_per_frame = P * tokens_per_player_frame covers
the whole interleaved multiplayer sequence. Three layouts:

- bidirectional: everything sees everything (full-sequence denoising).
- causal window: frame i sees frames (i - L_s, i], newest L_s frames.
- teacher forcing: a doubled sequence [clean | noisy] where each noisy
  frame sees itself plus strictly-earlier clean frames, clean frames are
  causal among themselves, and everything is clipped to the last L_s
  frames. This makes one parallel pass reproduce what each frame's final
  denoise step saw during sequential generation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class AttentionMask:
    allow: np.ndarray  # (S, S) bool; rows are queries, columns are keys
    frame_of: np.ndarray  # (S,) int32 frame index per token
    is_noisy: np.ndarray = field(default=None)  # (S,) bool, doubled layout only

    def __post_init__(self):
        allow = np.ascontiguousarray(self.allow, dtype=bool)
        if allow.ndim != 2 or allow.shape[0] != allow.shape[1]:
            raise ValueError(f"mask must be square, got {allow.shape}")
        if not allow.any(axis=1).all():
            raise ValueError("every query must attend to at least one key")
        frame_of = np.ascontiguousarray(self.frame_of, dtype=np.int32)
        if frame_of.shape != (allow.shape[0],):
            raise ValueError("frame_of must map every token")
        noisy = self.is_noisy
        if noisy is None:
            noisy = np.zeros(allow.shape[0], dtype=bool)
        else:
            noisy = np.ascontiguousarray(noisy, dtype=bool)
        object.__setattr__(self, "allow", allow)
        object.__setattr__(self, "frame_of", frame_of)
        object.__setattr__(self, "is_noisy", noisy)

    @property
    def size(self) -> int:
        return self.allow.shape[0]

    def dump(self) -> str:
        """Text grid, '#' = allowed, '.' = blocked, one row per query."""
        return "\n".join(
            "".join("#" if a else "." for a in row) for row in self.allow
        )


def bidirectional_mask(T: int, tokens_per_frame: int) -> AttentionMask:
    if T < 1 or tokens_per_frame < 1:
        raise ValueError("T and tokens_per_frame must be at least 1")
    S = T * tokens_per_frame
    frame_of = np.repeat(np.arange(T, dtype=np.int32), tokens_per_frame)
    return AttentionMask(np.ones((S, S), dtype=bool), frame_of)


def causal_window_mask(T: int, L_s: int, tokens_per_frame: int) -> AttentionMask:
    """Frame i attends frame j iff j <= i and j > i - L_s."""
    if T < 1 or tokens_per_frame < 1:
        raise ValueError("T and tokens_per_frame must be at least 1")
    if L_s < 1:
        raise ValueError("window must span at least 1 frame")
    frame_of = np.repeat(np.arange(T, dtype=np.int32), tokens_per_frame)
    q = frame_of[:, None]
    k = frame_of[None, :]
    allow = (k <= q) & (k > q - L_s)
    return AttentionMask(allow, frame_of)


def teacher_forcing_mask(L_s: int, L_t: int, tokens_per_frame: int) -> AttentionMask:
    """Doubled layout over [clean frames 0..L_t-1 | noisy frames 0..L_t-1].

    Allowed pairs, all further clipped to kv_frame > q_frame - L_s:
      noisy -> noisy: same frame only
      noisy -> clean: strictly earlier frame
      clean -> clean: causal (kv_frame <= q_frame)
    """
    if L_s < 1 or L_t < 1 or tokens_per_frame < 1:
        raise ValueError("L_s, L_t, and tokens_per_frame must be at least 1")
    ctx_len = L_t * tokens_per_frame
    S = 2 * ctx_len
    idx = np.arange(S, dtype=np.int64)
    frame = ((idx // tokens_per_frame) % L_t).astype(np.int32)
    noisy = idx >= ctx_len

    q_frame = frame[:, None]
    k_frame = frame[None, :]
    q_noisy = noisy[:, None]
    k_noisy = noisy[None, :]

    allow = (
        (q_noisy & k_noisy & (q_frame == k_frame))
        | (q_noisy & ~k_noisy & (q_frame > k_frame))
        | (~q_noisy & ~k_noisy & (q_frame >= k_frame))
    )
    allow &= k_frame > q_frame - L_s
    return AttentionMask(allow, frame, noisy)


def mask_to_bias(mask: AttentionMask, blocked: float = -1e9) -> np.ndarray:
    """Additive attention bias: 0 where allowed, `blocked` where not."""
    bias = np.zeros(mask.allow.shape, dtype=np.float32)
    bias[~mask.allow] = np.float32(blocked)
    return bias
