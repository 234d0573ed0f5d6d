"""Rotary position encoding over player-local (time, row, col) coordinates.

Each attention head dimension is split into rotation pairs; the pairs are
partitioned across the three axes (time gets the remainder first). Phases
depend only on the player-local coordinates, so both players' tokens at
equal local positions rotate identically.
"""

from __future__ import annotations

import numpy as np

from ..substrate import Tensor, concat, mul, reshape, slice_axis

ROPE_BASE = 10000.0


def split_pairs(n_pairs: int) -> tuple[int, int, int]:
    """Partition rotation pairs across (t, h, w); t absorbs remainders first."""
    base, rem = divmod(n_pairs, 3)
    return base + (1 if rem >= 1 else 0), base + (1 if rem >= 2 else 0), base


def _axis_phases(pos: np.ndarray, n: int) -> np.ndarray:
    if n == 0:
        return np.zeros(pos.shape + (0,), dtype=np.float64)
    freqs = ROPE_BASE ** (-np.arange(n, dtype=np.float64) / n)
    return pos[..., None].astype(np.float64) * freqs


def rope_tables(
    pos_t: np.ndarray, pos_h: np.ndarray, pos_w: np.ndarray, head_dim: int
) -> tuple[np.ndarray, np.ndarray]:
    """cos/sin tables of shape (S, head_dim // 2) for per-token positions."""
    if head_dim % 2 != 0:
        raise ValueError("head_dim must be even for rotary pairs")
    nt, nh, nw = split_pairs(head_dim // 2)
    phases = np.concatenate(
        [_axis_phases(pos_t, nt), _axis_phases(pos_h, nh), _axis_phases(pos_w, nw)],
        axis=-1,
    )
    return np.cos(phases).astype(np.float32), np.sin(phases).astype(np.float32)


def rotate_tensor(x: Tensor, cos: np.ndarray, sin: np.ndarray) -> Tensor:
    """Rotate pairs of the last axis of (..., S, head_dim) by (S, hd/2) tables."""
    *lead, S, hd = x.shape
    half = hd // 2
    paired = reshape(x, tuple(lead) + (S, half, 2))
    even = slice_axis(paired, len(lead) + 2, 0, 1)
    odd = slice_axis(paired, len(lead) + 2, 1, 2)
    c = cos.reshape((1,) * len(lead) + (S, half, 1))
    s = sin.reshape((1,) * len(lead) + (S, half, 1))
    rot_even = mul(even, c) - mul(odd, s)
    rot_odd = mul(even, s) + mul(odd, c)
    out = concat([rot_even, rot_odd], axis=len(lead) + 2)
    return reshape(out, tuple(lead) + (S, hd))


def rotate_array(x: np.ndarray, cos: np.ndarray, sin: np.ndarray) -> np.ndarray:
    """Pure numpy twin of rotate_tensor for inference paths and tests."""
    *lead, S, hd = x.shape
    half = hd // 2
    paired = x.reshape(tuple(lead) + (S, half, 2))
    even, odd = paired[..., 0], paired[..., 1]
    c = cos.reshape((1,) * len(lead) + (S, half))
    s = sin.reshape((1,) * len(lead) + (S, half))
    out = np.empty_like(paired)
    out[..., 0] = even * c - odd * s
    out[..., 1] = even * s + odd * c
    return out.reshape(x.shape)


def token_positions(
    frame_index: np.ndarray, tokens_per_player_frame: int, grid_w: int, players: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-token (t, h, w) for a frame-major (frames, players, tokens) layout.

    `frame_index` carries one time coordinate per frame block, which lets a
    doubled teacher-forcing layout reuse local times for its second half.
    """
    tpp = tokens_per_player_frame
    local = np.arange(tpp, dtype=np.int64)
    h = local // grid_w
    w = local % grid_w
    n_frames = frame_index.shape[0]
    pos_t = np.repeat(frame_index.astype(np.int64), players * tpp)
    pos_h = np.tile(h, n_frames * players)
    pos_w = np.tile(w, n_frames * players)
    return pos_t, pos_h, pos_w


def apply_player_rope(tokens: Tensor, pos_t, pos_h, pos_w) -> Tensor:
    """Rotate one player's (..., S, head_dim) tokens at the given local grid."""
    cos, sin = rope_tables(
        np.asarray(pos_t), np.asarray(pos_h), np.asarray(pos_w), tokens.shape[-1]
    )
    return rotate_tensor(tokens, cos, sin)
