"""Linear-path flow matching: noising, inversion, re-noising, and the loss.

Conventions: clean data x and noise eps share a trailing layout
(..., P, T, H, W, C); noise levels come per (player, frame) and broadcast
over the spatial dims. Level 0 is clean, level 1 is pure noise:

    x_sigma = (1 - sigma) * x + sigma * eps
    v target = eps - x
    x0_hat  = x_sigma - sigma * v

Every function takes either plain numpy arrays (generation hot path) or
substrate Tensors (training losses); the result type follows the inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .substrate import Rng, Tensor
from .substrate import tensor as _tensor


@dataclass(frozen=True)
class NoiseLevels:
    """Per-(player, frame) noise levels, shape (P, T), entries in [0, 1]."""

    sigma: np.ndarray

    def __post_init__(self):
        sig = np.ascontiguousarray(self.sigma, dtype=np.float32)
        if sig.ndim != 2:
            raise ValueError(f"noise levels must be (P, T), got {sig.shape}")
        if sig.min() < 0.0 or sig.max() > 1.0:
            raise ValueError("noise levels must lie in [0, 1]")
        object.__setattr__(self, "sigma", sig)


@dataclass(frozen=True)
class DenoiseSchedule:
    """Ascending generation levels; the sampler walks them top-down."""

    timesteps: tuple

    def __post_init__(self):
        ts = tuple(float(t) for t in self.timesteps)
        if len(ts) == 0:
            raise ValueError("schedule must be non-empty")
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError("schedule must be strictly increasing")
        if ts[-1] != 1.0:
            raise ValueError("schedule must end at exactly 1.0")
        if ts[0] <= 0.0 or any(t > 1.0 for t in ts):
            raise ValueError("schedule levels must lie in (0, 1]")
        object.__setattr__(self, "timesteps", ts)

    def __len__(self) -> int:
        return len(self.timesteps)


DEFAULT_SCHEDULE = DenoiseSchedule((0.25, 0.5, 0.75, 1.0))


def sample_noise_levels(mode: str, P: int, T: int, rng: Rng) -> NoiseLevels:
    """Draw noise levels: one shared value, or one per (player, frame)."""
    if P < 1 or T < 1:
        raise ValueError("P and T must be at least 1")
    if mode == "shared":
        value = rng.uniform()
        return NoiseLevels(np.full((P, T), value, dtype=np.float32))
    if mode == "independent":
        return NoiseLevels(rng.uniform((P, T)).astype(np.float32))
    raise ValueError(f"unknown noise mode {mode!r}")


def _sigma_factor(sigma, ref_shape: tuple) -> np.ndarray | float:
    """Broadcastable multiplier from a scalar, (P, T) array, or NoiseLevels."""
    if isinstance(sigma, NoiseLevels):
        sigma = sigma.sigma
    if isinstance(sigma, (int, float)):
        return float(sigma)
    arr = np.asarray(sigma, dtype=np.float32)
    if arr.ndim == 0:
        return float(arr)
    if arr.ndim == 2:
        if len(ref_shape) < 5 or arr.shape != tuple(ref_shape[-5:-3]):
            raise ValueError(
                f"noise levels {arr.shape} do not match the (P, T) dims of {ref_shape}"
            )
        return arr.reshape(arr.shape + (1, 1, 1))
    raise ValueError(f"noise levels must be scalar or (P, T), got shape {arr.shape}")


def _shape_of(x) -> tuple:
    return x.shape if isinstance(x, (Tensor, np.ndarray)) else np.shape(x)


def forward_noise(x, sigma, eps):
    """Noised sample at the given levels: (1 - sigma) x + sigma eps."""
    if _shape_of(x) != _shape_of(eps):
        raise ValueError(f"x {_shape_of(x)} and eps {_shape_of(eps)} must match")
    s = _sigma_factor(sigma, _shape_of(x))
    if isinstance(x, Tensor) or isinstance(eps, Tensor):
        xt = x if isinstance(x, Tensor) else _tensor(x)
        et = eps if isinstance(eps, Tensor) else _tensor(eps)
        one_minus = 1.0 - s if isinstance(s, float) else (1.0 - s).astype(np.float32)
        return xt * one_minus + et * s
    return ((1.0 - s) * x + s * eps).astype(np.float32)


def predict_clean(x_sigma, sigma, v):
    """Invert the velocity prediction to a clean estimate: x_sigma - sigma v."""
    if _shape_of(x_sigma) != _shape_of(v):
        raise ValueError(f"x_sigma {_shape_of(x_sigma)} and v {_shape_of(v)} must match")
    s = _sigma_factor(sigma, _shape_of(x_sigma))
    if isinstance(x_sigma, Tensor) or isinstance(v, Tensor):
        xt = x_sigma if isinstance(x_sigma, Tensor) else _tensor(x_sigma)
        vt = v if isinstance(v, Tensor) else _tensor(v)
        return xt - vt * s
    return (x_sigma - s * v).astype(np.float32)


def euler_step(x0_hat, eps, t: float):
    """Re-noise a clean estimate to level t with fresh noise."""
    t = float(t)
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"target level must be in [0, 1], got {t}")
    if _shape_of(x0_hat) != _shape_of(eps):
        raise ValueError("x0_hat and eps must share a shape")
    if isinstance(x0_hat, Tensor) or isinstance(eps, Tensor):
        xt = x0_hat if isinstance(x0_hat, Tensor) else _tensor(x0_hat)
        et = eps if isinstance(eps, Tensor) else _tensor(eps)
        return xt * (1.0 - t) + et * t
    return ((1.0 - t) * x0_hat + t * eps).astype(np.float32)


def fm_loss(v_pred, x, eps):
    """Mean squared error against the target velocity field eps - x."""
    if _shape_of(v_pred) != _shape_of(x) or _shape_of(x) != _shape_of(eps):
        raise ValueError("v_pred, x, and eps must share a shape")
    if isinstance(v_pred, Tensor) or isinstance(x, Tensor) or isinstance(eps, Tensor):
        vt = v_pred if isinstance(v_pred, Tensor) else _tensor(v_pred)
        if isinstance(x, Tensor) or isinstance(eps, Tensor):
            xt = x if isinstance(x, Tensor) else _tensor(x)
            et = eps if isinstance(eps, Tensor) else _tensor(eps)
            diff = vt - (et - xt)
        else:
            diff = vt - (np.asarray(eps, np.float32) - np.asarray(x, np.float32))
        return (diff * diff).mean()
    diff = np.asarray(v_pred, np.float32) - (np.asarray(eps, np.float32) - np.asarray(x, np.float32))
    return float(np.mean(diff.astype(np.float64) ** 2))
