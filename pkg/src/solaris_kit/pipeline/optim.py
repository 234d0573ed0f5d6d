"""Hand-rolled Adam with exportable, bitwise-checkpointable state."""

from __future__ import annotations

from collections import OrderedDict

import numpy as np

from ..substrate import Tensor

EPS = 1e-8


class Adam:
    """Adaptive-moment update over named parameters.

    Moments live in float32 like the weights, so a checkpoint round trip
    restores the optimizer exactly and resumed runs stay bitwise equal.
    """

    def __init__(
        self,
        named_params: "OrderedDict[str, Tensor]",
        lr: float,
        beta1: float = 0.9,
        beta2: float = 0.95,
        weight_decay: float = 0.0,
    ):
        self.named = OrderedDict(named_params)
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.weight_decay = float(weight_decay)
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in self.named.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in self.named.items()}

    def step(self) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bias1 = 1.0 - b1**self.t
        bias2 = 1.0 - b2**self.t
        for k, p in self.named.items():
            g = p.grad
            if g is None:
                continue
            g = g.astype(np.float32)
            if self.weight_decay:
                g = g + self.weight_decay * p.data
            self.m[k] = (b1 * self.m[k] + (1.0 - b1) * g).astype(np.float32)
            self.v[k] = (b2 * self.v[k] + (1.0 - b2) * g * g).astype(np.float32)
            m_hat = self.m[k] / bias1
            v_hat = self.v[k] / bias2
            p.data = (p.data - self.lr * m_hat / (np.sqrt(v_hat) + EPS)).astype(
                np.float32
            )

    # -- checkpoint plumbing --------------------------------------------------

    def state_arrays(self) -> "OrderedDict[str, np.ndarray]":
        """Flat named arrays for the checkpoint writer."""
        out: "OrderedDict[str, np.ndarray]" = OrderedDict()
        out["adam.t"] = np.array([self.t], dtype=np.float32)
        for k in self.named:
            out[f"adam.m.{k}"] = self.m[k]
            out[f"adam.v.{k}"] = self.v[k]
        return out

    def load_state_arrays(self, arrays) -> None:
        self.t = int(arrays["adam.t"][0])
        for k in self.named:
            self.m[k] = np.ascontiguousarray(arrays[f"adam.m.{k}"], dtype=np.float32)
            self.v[k] = np.ascontiguousarray(arrays[f"adam.v.{k}"], dtype=np.float32)
