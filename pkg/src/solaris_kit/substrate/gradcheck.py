"""Central-difference verification of reverse-mode gradients."""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

from .rng import Rng
from .tensor import Tensor, backward, tape, zero_grads


def finite_diff_check(
    f: Callable[[], Tensor],
    params: Iterable[Tensor],
    h: float = 1e-3,
    sample: int | None = None,
    rng: Rng | None = None,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    `f` takes no arguments, reads `params`, and returns a scalar Tensor. It
    must be deterministic; we call it twice up front and refuse to proceed
    if the two values differ bitwise. Relative error per coordinate is
    |analytic - numeric| / (|analytic| + 1e-8).

    With `sample` set, at most that many coordinates per parameter are
    checked (chosen by `rng`), which keeps large-model checks tractable.
    The numeric quotient uses the actually-realized float32 step, not the
    nominal 2h, so coarse steps stay accurate.
    """
    params = list(params)
    probe_a = f()
    probe_b = f()
    if probe_a.data.tobytes() != probe_b.data.tobytes():
        raise ValueError("finite_diff_check requires a deterministic function")

    zero_grads(params)
    with tape():
        loss = f()
    grads = backward(loss, params)
    zero_grads(params)

    if sample is not None and rng is None:
        rng = Rng(0, "gradcheck")

    worst = 0.0
    for p in params:
        flat = p.data.reshape(-1)
        analytic = grads[p].reshape(-1)
        n = flat.size
        if sample is None or sample >= n:
            coords: Sequence[int] = range(n)
        else:
            coords = rng.shuffled(n)[:sample]
        for i in coords:
            orig = flat[i]
            flat[i] = orig + h
            up = float(f().data)
            hi = float(flat[i])
            flat[i] = orig - h
            dn = float(f().data)
            lo = float(flat[i])
            flat[i] = orig
            numeric = (up - dn) / (hi - lo)
            err = abs(float(analytic[i]) - numeric) / (abs(float(analytic[i])) + 1e-8)
            if err > worst:
                worst = err
    return worst
