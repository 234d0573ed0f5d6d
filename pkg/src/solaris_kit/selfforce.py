"""Self-forcing post-training: learn on the model's own rollouts.

The memory-lean step is: (1) roll the generator out over L_t frames with
gradients disabled, collecting each frame's noisy input at one sampled
schedule index s and its clean estimate; (2) recompute all L_t stop-step
denoise outputs in a single masked parallel forward over the doubled
sequence [clean | noisy], which sees exactly the sliding-window context
the sequential rollout saw; (3) backprop a distribution-matching loss
through that one forward. Peak memory then scales with L_t, not the
rollout-times-window product of taping the whole rollout, which the naive
baseline here does (it exists for loss/gradient coincidence checks and
memory comparisons).

Losses: `teacher_regression` pulls recomputed clean estimates toward a
frozen long-context bidirectional teacher's one-shot reconstruction of the
same noisy frames; `dmd` is the two-score distribution-matching gradient
with a trainable critic as the fake score and the teacher as the real one.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .argen import RolloutCheckpoint, rollout
from .flowmatch import (
    DEFAULT_SCHEDULE,
    DenoiseSchedule,
    fm_loss,
    forward_noise,
    predict_clean,
    sample_noise_levels,
)
from .masks import bidirectional_mask, teacher_forcing_mask
from .mpdit import MultiplayerDiT
from .substrate import (
    Rng,
    TapeStats,
    Tensor,
    backward,
    concat,
    slice_axis,
    tape,
    tensor,
    zero_grads,
)

LOSS_KINDS = ("teacher_regression", "dmd")
NAIVE_CELL_CAP = 512  # L_t * L_s ceiling for the full-tape baseline


@dataclass(frozen=True)
class SelfForceConfig:
    L_s: int
    L_t: int
    loss_kind: str = "teacher_regression"
    kv_backprop: bool = False
    critic_updates_per_generator_update: int = 5
    schedule: DenoiseSchedule = DEFAULT_SCHEDULE

    def __post_init__(self):
        if not 1 <= self.L_s <= self.L_t:
            raise ValueError("need L_t >= L_s >= 1")
        if self.loss_kind not in LOSS_KINDS:
            raise ValueError(f"loss_kind must be one of {LOSS_KINDS}")
        if self.loss_kind == "dmd" and self.critic_updates_per_generator_update < 1:
            raise ValueError("dmd needs at least one critic update per generator update")


@dataclass
class TeacherBundle:
    """Frozen full-context bidirectional teacher."""

    model: MultiplayerDiT
    frozen: bool = True

    @classmethod
    def from_model(cls, model: MultiplayerDiT) -> "TeacherBundle":
        return cls(model=model.clone(frozen=True))


def _rel_err(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.max(np.abs(a - b)) / (np.max(np.abs(a)) + 1e-12))


def parallel_recompute(
    model: MultiplayerDiT, chk: RolloutCheckpoint, actions, cfg: SelfForceConfig
) -> Tensor:
    """One masked forward reproducing every frame's stop-step denoise.

    Returns the recomputed clean estimates for the noisy half with live
    gradients, shape (B, P, L_t, H, W, C). Raises if the recomputation
    drifts from the rollout's own clean estimates, which catches weight or
    seed mismatches between rollout and recompute.
    """
    mcfg = model.config
    L_t = len(chk)
    if L_t != cfg.L_t:
        raise ValueError(f"checkpoint holds {L_t} frames, config says {cfg.L_t}")
    X0 = chk.x0_array()
    Xs = chk.xs_array()
    B, P = X0.shape[0], X0.shape[1]

    x_in = np.concatenate([X0, Xs], axis=2)  # clean half then noisy half
    sigma = np.concatenate(
        [np.zeros((P, L_t), np.float32), np.full((P, L_t), chk.sigma_s, np.float32)],
        axis=1,
    )
    a = np.asarray(actions, np.float32)[:, :, :L_t]
    a2 = np.concatenate([a, a], axis=2)
    mask = teacher_forcing_mask(cfg.L_s, L_t, mcfg.tokens_per_frame)
    fft = model.condition_tokens(chk.init_frames)

    v = model.forward(
        x_in, sigma, a2, mask=mask, kv_stop_grad=not cfg.kv_backprop, first_frame_tokens=fft
    )
    v_noisy = slice_axis(v, 2, L_t, 2 * L_t)
    x0_hat = predict_clean(tensor(Xs), chk.sigma_s, v_noisy)

    drift = _rel_err(X0, x0_hat.data)
    if drift > 1e-4:
        raise RuntimeError(
            f"rollout checkpoint does not match current weights (replay divergence {drift:.2e})"
        )
    return x0_hat


def teacher_reconstruction(
    teacher: TeacherBundle, chk: RolloutCheckpoint, actions
) -> np.ndarray:
    """The teacher's one-shot full-context reconstruction of the noisy frames."""
    tm = teacher.model
    Xs = chk.xs_array()
    B, P, L_t = Xs.shape[:3]
    sigma = np.full((P, L_t), chk.sigma_s, np.float32)
    mask = bidirectional_mask(L_t, tm.config.tokens_per_frame)
    fft = tm.condition_tokens(chk.init_frames)
    a = np.asarray(actions, np.float32)[:, :, :L_t]
    v = tm.forward(Xs, sigma, a, mask=mask, first_frame_tokens=fft)
    x0 = predict_clean(Xs, chk.sigma_s, v.data)
    return np.asarray(x0, np.float32)


def _mse(pred: Tensor, target: np.ndarray) -> Tensor:
    diff = pred - target
    return (diff * diff).mean()


def _dmd_loss(
    x0_hat: Tensor,
    teacher: TeacherBundle,
    critic: MultiplayerDiT,
    chk: RolloutCheckpoint,
    actions,
    rng: Rng,
) -> Tensor:
    """Two-score distribution-matching surrogate.

    Both scores are one-shot clean reconstructions of the same re-noised
    generator sample; their difference, normalized per the usual scheme,
    becomes a constant gradient direction applied to the live estimates.
    """
    gen = x0_hat.data
    B, P, L_t = gen.shape[:3]
    sigma = sample_noise_levels("shared", P, L_t, rng.spawn("dmd-sigma"))
    eps = rng.spawn("dmd-eps").normal(gen.shape)
    noised = forward_noise(gen, sigma, eps)
    a = np.asarray(actions, np.float32)[:, :, :L_t]
    mask = bidirectional_mask(L_t, critic.config.tokens_per_frame)

    fft_t = teacher.model.condition_tokens(chk.init_frames)
    v_real = teacher.model.forward(noised, sigma, a, mask=mask, first_frame_tokens=fft_t)
    real = np.asarray(predict_clean(noised, sigma, v_real.data), np.float32)

    critic_frozen = critic.clone(frozen=True)
    fft_c = critic_frozen.condition_tokens(chk.init_frames)
    v_fake = critic_frozen.forward(noised, sigma, a, mask=mask, first_frame_tokens=fft_c)
    fake = np.asarray(predict_clean(noised, sigma, v_fake.data), np.float32)

    norm = np.mean(np.abs(gen - real), dtype=np.float64) + 1e-6
    grad_dir = ((fake - real) / norm).astype(np.float32)
    return (x0_hat * grad_dir).mean()


def self_forcing_loss(
    model: MultiplayerDiT,
    teacher: TeacherBundle,
    critic: MultiplayerDiT | None,
    cfg: SelfForceConfig,
    init_frames,
    actions,
    rng: Rng,
):
    """Rollout, recompute, and the configured loss. Returns (loss, chk)."""
    frames, chk = rollout(
        model,
        init_frames,
        actions,
        cfg.L_t,
        cfg.L_s,
        rng,
        track_gradients=False,
        schedule=cfg.schedule,
    )
    x0_hat = parallel_recompute(model, chk, actions, cfg)
    if cfg.loss_kind == "teacher_regression":
        target = teacher_reconstruction(teacher, chk, actions)
        loss = _mse(x0_hat, target)
    else:
        if critic is None:
            raise ValueError("dmd loss needs a critic model")
        loss = _dmd_loss(x0_hat, teacher, critic, chk, actions, rng)
    return loss, chk


def generator_step(
    model: MultiplayerDiT,
    teacher: TeacherBundle,
    critic: MultiplayerDiT | None,
    cfg: SelfForceConfig,
    batch,
    rng: Rng,
    optimizer=None,
) -> dict:
    """One self-forcing generator update. batch = (init_frames, actions).

    Returns {loss, stats, s, frames, chk}; applies the optimizer when one
    is given, otherwise leaves gradients in the parameters' .grad.
    """
    init_frames, actions = batch
    params = model.params()
    zero_grads(params)
    with tape() as tp:
        loss, chk = self_forcing_loss(model, teacher, critic, cfg, init_frames, actions, rng)
        loss_val = loss.item()
        if not np.isfinite(loss_val):
            raise RuntimeError(
                f"non-finite generator loss {loss_val} (s={chk.s}, sigma_s={chk.sigma_s})"
            )
        backward(loss, params)
    if optimizer is not None:
        optimizer.step()
    return {
        "loss": loss_val,
        "stats": tp.stats(),
        "s": chk.s,
        "chk": chk,
    }


def critic_step(
    critic: MultiplayerDiT,
    generator_samples,
    actions,
    init_frames,
    rng: Rng,
    optimizer=None,
) -> float:
    """Denoising loss for the critic on (detached) generator samples."""
    x0 = np.asarray(generator_samples, np.float32)
    B, P, L_t = x0.shape[:3]
    params = critic.params()
    zero_grads(params)
    with tape():
        sigma = sample_noise_levels("shared", P, L_t, rng.spawn("sigma"))
        eps = rng.spawn("eps").normal(x0.shape)
        noised = forward_noise(x0, sigma, eps)
        mask = bidirectional_mask(L_t, critic.config.tokens_per_frame)
        fft = critic.condition_tokens(init_frames)
        a = np.asarray(actions, np.float32)[:, :, :L_t]
        v = critic.forward(noised, sigma, a, mask=mask, first_frame_tokens=fft)
        loss = fm_loss(v, x0, eps)
        loss_val = loss.item()
        backward(loss, params)
    if optimizer is not None:
        optimizer.step()
    return loss_val


def naive_self_forcing_step(
    model: MultiplayerDiT,
    teacher: TeacherBundle,
    cfg: SelfForceConfig,
    batch,
    rng: Rng,
    optimizer=None,
) -> tuple:
    """Full-tape baseline: backprop through the taped rollout itself.

    Intermediates are truncated exactly like the classic algorithm (only
    each frame's stop-step forward carries gradient; cache entries are
    detached unless kv_backprop). Returns (loss value, TapeStats).
    """
    if cfg.L_t * cfg.L_s > NAIVE_CELL_CAP:
        raise RuntimeError(
            f"naive step refused: L_t*L_s = {cfg.L_t * cfg.L_s} exceeds the cap {NAIVE_CELL_CAP}"
        )
    init_frames, actions = batch
    params = model.params()
    zero_grads(params)
    with tape() as tp:
        frames, chk = rollout(
            model,
            init_frames,
            actions,
            cfg.L_t,
            cfg.L_s,
            rng,
            track_gradients=True,
            schedule=cfg.schedule,
            kv_stop_grad=not cfg.kv_backprop,
        )
        target = teacher_reconstruction(teacher, chk, actions)
        x0_live = concat(chk.X0, axis=2)  # (B,P,L_t,H,W,C)
        loss = _mse(x0_live, target)
        loss_val = loss.item()
        if not np.isfinite(loss_val):
            raise RuntimeError(f"non-finite naive loss {loss_val}")
        backward(loss, params)
        stats = tp.stats()
    if optimizer is not None:
        optimizer.step()
    return loss_val, stats


class StepLogger:
    """Append-only NDJSON training log, one record per optimizer step."""

    def __init__(self, path):
        self.path = path
        self._fh = open(path, "a", encoding="utf-8")

    def log(self, step: int, loss: float, stats: TapeStats, s: int, seed: int) -> None:
        record = {
            "step": int(step),
            "loss": float(loss),
            "peak_bytes": int(stats.peak_bytes),
            "retained_buffers": int(stats.retained_buffers),
            "s": int(s),
            "seed": int(seed),
        }
        self._fh.write(json.dumps(record) + "\n")
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
