"""Autoregressive frame generation and the causal training objective.

Generation runs frame by frame: each new frame starts as pure noise and is
denoised down a few-step schedule against the rolling KV cache of past
clean frames, then one extra clean pass (noise level 0) writes the frame's
keys/values into the cache. The denoising loop can stop early at schedule
index s, which is how self-forcing training collects per-frame pairs
(noisy input at level t_s, clean estimate) for its parallel recompute.

Two modes share this code path bitwise: gradient-free generation (no tape
recorded at all) and the full-tape baseline used for memory comparisons,
which re-detaches every intermediate except the stop-step outputs, exactly
the classic truncated-backprop behavior.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .flowmatch import (
    DEFAULT_SCHEDULE,
    DenoiseSchedule,
    NoiseLevels,
    euler_step,
    fm_loss,
    forward_noise,
    predict_clean,
    sample_noise_levels,
)
from .masks import bidirectional_mask, causal_window_mask
from .mpdit import KvCache, MultiplayerDiT
from .substrate import Rng, Tensor, no_tape, stop_grad, tensor


@dataclass
class GenerationState:
    """One autoregressive stream: cache, schedule, RNG, conditioning."""

    cache: KvCache
    schedule: DenoiseSchedule
    rng: Rng
    first_frame_tokens: Tensor | None = None
    frames_emitted: int = 0


@dataclass
class RolloutCheckpoint:
    """Per-frame artifacts of one rollout at the sampled stop level.

    X0[i] is frame i's final clean estimate, Xs[i] the noisy input that
    produced it at schedule index s (1-based). Entries are live Tensors
    when the rollout was taped, plain arrays otherwise.
    """

    X0: list = field(default_factory=list)
    Xs: list = field(default_factory=list)
    s: int = 1
    sigma_s: float = 0.0
    init_frames: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.X0)

    def x0_array(self) -> np.ndarray:
        return np.concatenate([_data(x) for x in self.X0], axis=2)

    def xs_array(self) -> np.ndarray:
        return np.concatenate([_data(x) for x in self.Xs], axis=2)


def _data(x) -> np.ndarray:
    return x.data if isinstance(x, Tensor) else np.asarray(x, np.float32)


def new_generation_state(
    model: MultiplayerDiT,
    init_frames: np.ndarray,
    rng: Rng,
    window_frames: int | None = None,
    schedule: DenoiseSchedule = DEFAULT_SCHEDULE,
) -> GenerationState:
    """Fresh stream conditioned on one real first frame per player."""
    cfg = model.config
    window = cfg.window_L_s if window_frames is None else window_frames
    if window > cfg.window_L_s:
        raise ValueError(f"window {window} exceeds the model's {cfg.window_L_s}")
    cache = KvCache(cfg.layers, window)
    fft = model.condition_tokens(init_frames)
    return GenerationState(cache=cache, schedule=schedule, rng=rng, first_frame_tokens=fft)


def denoise_frame(
    model: MultiplayerDiT,
    actions_for_frame,
    state: GenerationState,
    stop_idx: int,
    kv_stop_grad: bool = False,
    taped: bool = False,
):
    """Generate one frame, stopping the schedule at index `stop_idx`.

    Returns (clean estimate, noisy input at the stop level). Appends the
    clean frame's keys/values to the cache afterward. With `taped`, all
    intermediates are re-detached except the stop step's clean estimate,
    so a surrounding tape carries gradients only through that forward.
    """
    cfg = model.config
    schedule = state.schedule.timesteps
    T_steps = len(schedule)
    if not 1 <= stop_idx <= T_steps:
        raise ValueError(f"stop index {stop_idx} outside 1..{T_steps}")
    if state.cache.frames_seen != state.frames_emitted:
        raise ValueError("cache does not belong to this generation stream")

    a = np.asarray(actions_for_frame, np.float32)
    if a.ndim == 3:
        a = a[:, :, None, :]
    B, P = a.shape[0], a.shape[1]
    obs_shape = (B, P, 1, cfg.obs_height, cfg.obs_width, cfg.obs_channels)

    frame_rng = state.rng.spawn(("frame", state.frames_emitted))
    x = frame_rng.spawn("init").normal(obs_shape)
    x_stop = x
    x0_hat = None
    for j in range(T_steps, stop_idx - 1, -1):
        level = schedule[j - 1]
        sig = np.full((P, 1), level, dtype=np.float32)
        x_in = tensor(x) if isinstance(x, np.ndarray) else x
        if taped and j != stop_idx:
            x_in = stop_grad(x_in)
        v = model.forward(
            x_in,
            sig,
            a,
            cache=state.cache,
            kv_stop_grad=kv_stop_grad,
            first_frame_tokens=state.first_frame_tokens,
            remat=not taped,
        )
        if j == stop_idx:
            x_stop = x_in if taped else _data(x_in)
        x0_hat = predict_clean(x_in, level, v)
        if j > stop_idx:
            eps = frame_rng.spawn(("renoise", j)).normal(obs_shape)
            nxt = euler_step(x0_hat, eps, schedule[j - 2])
            x = stop_grad(nxt) if taped else _data(nxt)

    # clean pass at level 0 writes this frame's keys/values into the cache
    zero_sig = np.zeros((P, 1), dtype=np.float32)
    cache_in = x0_hat if taped else tensor(_data(x0_hat))
    model.forward(
        cache_in,
        zero_sig,
        a,
        cache=state.cache,
        kv_stop_grad=kv_stop_grad,
        first_frame_tokens=state.first_frame_tokens,
        append_to_cache=True,
        remat=not taped,
    )
    state.frames_emitted += 1

    if taped:
        return x0_hat, x_stop
    return _data(x0_hat), _data(x_stop)


def rollout(
    model: MultiplayerDiT,
    init_frames: np.ndarray,
    action_stream: np.ndarray,
    L_t: int,
    L_s: int,
    rng: Rng,
    track_gradients: bool = False,
    schedule: DenoiseSchedule = DEFAULT_SCHEDULE,
    stop_idx: int | None = None,
    kv_stop_grad: bool = False,
):
    """Emit L_t frames autoregressively; returns (frames, RolloutCheckpoint).

    frames: (B, P, L_t, H, W, C) float32. With track_gradients=False the
    whole rollout runs off-tape (nothing retained); with True every forward
    is taped, the memory profile of backprop-through-rollout.
    """
    actions = np.asarray(action_stream, np.float32)
    if actions.ndim != 4 or actions.shape[2] < L_t:
        raise ValueError(f"action stream must cover {L_t} frames, got {actions.shape}")
    init = np.asarray(init_frames, np.float32)

    if stop_idx is None:
        stop_idx = 1 + int(rng.spawn("stop").integers(0, len(schedule)))
    chk = RolloutCheckpoint(
        s=stop_idx, sigma_s=float(schedule.timesteps[stop_idx - 1]), init_frames=init
    )

    def run():
        state = new_generation_state(
            model, init, rng.spawn("rollout"), window_frames=L_s, schedule=schedule
        )
        for i in range(L_t):
            x0, xs = denoise_frame(
                model,
                actions[:, :, i],
                state,
                stop_idx,
                kv_stop_grad=kv_stop_grad,
                taped=track_gradients,
            )
            chk.X0.append(x0)
            chk.Xs.append(xs)

    if track_gradients:
        run()
    else:
        with no_tape():
            run()
    frames = chk.x0_array()
    return frames, chk


def bidirectional_batch(model: MultiplayerDiT, clean_batch, actions, rng: Rng, first_frame=None):
    """Full-sequence denoising loss with one shared noise level."""
    return _training_loss(model, clean_batch, actions, rng, "shared", first_frame)


def diffusion_forcing_batch(model: MultiplayerDiT, clean_batch, actions, rng: Rng, first_frame=None):
    """Causal-window loss with independent per-(player, frame) noise levels."""
    return _training_loss(model, clean_batch, actions, rng, "independent", first_frame)


def _training_loss(model, clean_batch, actions, rng, mode, first_frame):
    cfg = model.config
    x = np.asarray(clean_batch, np.float32)
    B, P, T = x.shape[:3]
    sigma = sample_noise_levels(mode, P, T, rng.spawn("sigma"))
    eps = rng.spawn("eps").normal(x.shape)
    x_sigma = forward_noise(x, sigma, eps)
    if mode == "shared":
        mask = bidirectional_mask(T, cfg.tokens_per_frame)
    else:
        mask = causal_window_mask(T, cfg.window_L_s, cfg.tokens_per_frame)
    fft = model.condition_tokens(first_frame) if first_frame is not None else None
    v = model.forward(x_sigma, sigma, actions, mask=mask, first_frame_tokens=fft)
    return fm_loss(v, x, eps)
