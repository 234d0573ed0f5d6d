"""Minimal float32 tensor library with reverse-mode gradients.

Design points that the rest of the kit leans on:

- A `Tape` records operations only while active (`with tape():`). No active
  tape means pure numpy inference; there is no retain-but-detached limbo.
- Every op registers the arrays its backward closure captures via
  `Tape.save`, keyed by array identity, so `TapeStats` is an honest report
  of buffers retained for backward. Child tapes (recompute-in-backward)
  report their transient bytes into the parent's running peak.
- `checkpoint(fn, *args)` runs `fn` untaped, retains only the tensor
  arguments, and re-runs `fn` under a child tape when its gradient is
  needed. Transformer blocks execute through it, which keeps per-forward
  retention proportional to the attention context actually captured.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

_f32 = np.float32


def _as_f32(data) -> np.ndarray:
    # ascontiguousarray would promote 0-d to 1-d; asarray keeps scalar shape
    arr = np.asarray(data, dtype=_f32)
    if arr.ndim and not arr.flags["C_CONTIGUOUS"]:
        arr = np.ascontiguousarray(arr)
    return arr


class Tensor:
    """A float32 array plus gradient bookkeeping. Data is immutable by
    convention after creation (optimizers build replacement tensors)."""

    __slots__ = ("data", "requires_grad", "grad", "node", "name")

    def __init__(self, data, requires_grad: bool = False, name: str = ""):
        self.data = _as_f32(data)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self.node: "Node | None" = None
        self.name = name

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return stop_grad(self)

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        return reduce_sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        return reduce_mean(self, axis, keepdims)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes) -> "Tensor":
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes)

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return add(neg(self), other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self):
        tag = self.name or "tensor"
        return f"<{tag} {self.data.shape} grad={self.requires_grad}>"


def tensor(data, requires_grad: bool = False, name: str = "") -> Tensor:
    return Tensor(data, requires_grad, name)


def param(data, name: str = "") -> Tensor:
    return Tensor(data, requires_grad=True, name=name)


@dataclass
class TapeStats:
    retained_buffers: int = 0
    retained_bytes: int = 0
    peak_bytes: int = 0


class Node:
    __slots__ = ("parents", "bw", "out", "tape", "idx")

    def __init__(self, parents, bw, out, tape, idx):
        self.parents = parents
        self.bw = bw
        self.out = out
        self.tape = tape
        self.idx = idx


class Tape:
    """Recording of one training step's operations plus retention stats."""

    def __init__(self, parent: "Tape | None" = None):
        self.parent = parent
        self.nodes: list[Node] = []
        self._saved_ids: set[int] = set()
        self._saved_refs: list[np.ndarray] = []  # keeps id() keys alive
        self.retained_buffers = 0
        self.retained_bytes = 0
        self.peak_bytes = 0

    def save(self, *arrays: np.ndarray) -> None:
        for arr in arrays:
            key = id(arr)
            if key in self._saved_ids:
                continue
            self._saved_ids.add(key)
            self._saved_refs.append(arr)
            self.retained_buffers += 1
            self.retained_bytes += arr.nbytes
        self._bump(0)

    def _bump(self, descendant_bytes: int) -> None:
        total = self.retained_bytes + descendant_bytes
        if total > self.peak_bytes:
            self.peak_bytes = total
        if self.parent is not None:
            self.parent._bump(total)

    def add_node(self, parents, bw, out) -> Node:
        node = Node(parents, bw, out, self, len(self.nodes))
        self.nodes.append(node)
        out.node = node
        return node

    def stats(self) -> TapeStats:
        return TapeStats(self.retained_buffers, self.retained_bytes, self.peak_bytes)

    def __enter__(self) -> "Tape":
        _stack().append(self)
        return self

    def __exit__(self, *exc):
        popped = _stack().pop()
        assert popped is self


_tls = threading.local()


def _stack() -> list:
    stack = getattr(_tls, "stack", None)
    if stack is None:
        stack = []
        _tls.stack = stack
    return stack


def tape(parent: Tape | None = None) -> Tape:
    return Tape(parent)


def active_tape() -> Tape | None:
    stack = _stack()
    return stack[-1] if stack else None


class no_tape:
    """Suppress recording inside the block (pure inference)."""

    def __enter__(self):
        _stack().append(None)
        return self

    def __exit__(self, *exc):
        _stack().pop()


def tape_probe() -> TapeStats:
    """Stats of the outermost active tape (the instrumented step)."""
    stack = _stack()
    for tp in stack:
        if tp is not None:
            return tp.stats()
    return TapeStats()


# ---------------------------------------------------------------------------
# op plumbing


def _wants_grad(parents) -> bool:
    return any(isinstance(p, Tensor) and p.requires_grad for p in parents)


def _record(out: Tensor, parents, bw, saves: Sequence[np.ndarray] = ()) -> Tensor:
    tp = active_tape()
    if tp is None or not _wants_grad(parents):
        return out
    out.requires_grad = True
    tp.save(*saves)
    tp.add_node([p if isinstance(p, Tensor) else None for p in parents], bw, out)
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to `shape`."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (g, s) in enumerate(zip(grad.shape, shape)) if s == 1 and g != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return np.ascontiguousarray(grad, dtype=_f32).reshape(shape)


def _const(other) -> np.ndarray | float:
    if isinstance(other, (int, float)):
        return float(other)
    return _as_f32(other)


# ---------------------------------------------------------------------------
# elementwise


def add(a: Tensor, b) -> Tensor:
    if not isinstance(b, Tensor):
        c = _const(b)
        out = Tensor(a.data + c)
        return _record(out, [a], lambda g: [_unbroadcast(g, a.shape)])
    out = Tensor(a.data + b.data)
    a_shape, b_shape = a.shape, b.shape

    def bw(g):
        return [_unbroadcast(g, a_shape), _unbroadcast(g, b_shape)]

    return _record(out, [a, b], bw)


def sub(a: Tensor, b) -> Tensor:
    if not isinstance(b, Tensor):
        c = _const(b)
        out = Tensor(a.data - c)
        return _record(out, [a], lambda g: [_unbroadcast(g, a.shape)])
    out = Tensor(a.data - b.data)
    a_shape, b_shape = a.shape, b.shape

    def bw(g):
        return [_unbroadcast(g, a_shape), _unbroadcast(-g, b_shape)]

    return _record(out, [a, b], bw)


def neg(a: Tensor) -> Tensor:
    out = Tensor(-a.data)
    return _record(out, [a], lambda g: [_unbroadcast(-g, a.shape)])


def mul(a: Tensor, b) -> Tensor:
    if not isinstance(b, Tensor):
        c = _const(b)
        out = Tensor(a.data * c)
        saves = (c,) if isinstance(c, np.ndarray) else ()
        return _record(out, [a], lambda g: [_unbroadcast(g * c, a.shape)], saves)
    out = Tensor(a.data * b.data)
    ad, bd = a.data, b.data

    def bw(g):
        return [_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)]

    return _record(out, [a, b], bw, saves=(ad, bd))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """np.matmul semantics: 2-D or batched with broadcasting."""
    out = Tensor(np.matmul(a.data, b.data))
    ad, bd = a.data, b.data

    def bw(g):
        ga = np.matmul(g, bd.swapaxes(-1, -2))
        gb = np.matmul(ad.swapaxes(-1, -2), g)
        return [_unbroadcast(ga, ad.shape), _unbroadcast(gb, bd.shape)]

    return _record(out, [a, b], bw, saves=(ad, bd))


def gelu(a: Tensor) -> Tensor:
    """tanh-approximation gelu. Backward recomputes the tanh from the saved
    input instead of retaining it; halves this op's retention."""
    x = a.data
    c = _f32(np.sqrt(2.0 / np.pi))
    inner = c * (x + _f32(0.044715) * x * x * x)
    t = np.tanh(inner)
    out = Tensor(0.5 * x * (1.0 + t))

    def bw(g):
        tt = np.tanh(c * (x + _f32(0.044715) * x * x * x))
        dt = (1.0 - tt * tt) * c * (1.0 + 3.0 * _f32(0.044715) * x * x)
        return [_unbroadcast(g * (0.5 * (1.0 + tt) + 0.5 * x * dt), x.shape)]

    return _record(out, [a], bw, saves=(x,))


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    x = a.data
    shifted = x - x.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = (e / e.sum(axis=axis, keepdims=True)).astype(_f32)
    out = Tensor(y)

    def bw(g):
        dot = (g * y).sum(axis=axis, keepdims=True)
        return [((g - dot) * y).astype(_f32)]

    return _record(out, [a], bw, saves=(y,))


def layer_norm(a: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis, then scale and shift."""
    x = a.data
    mu = x.mean(axis=-1, keepdims=True, dtype=np.float64)
    var = x.var(axis=-1, keepdims=True, dtype=np.float64)
    rstd = (1.0 / np.sqrt(var + eps)).astype(_f32)
    xn = ((x - mu) * rstd).astype(_f32)
    out = Tensor(xn * gain.data + bias.data)
    gd = gain.data
    n = x.shape[-1]

    def bw(g):
        dxn = g * gd
        m1 = dxn.mean(axis=-1, keepdims=True)
        m2 = (dxn * xn).mean(axis=-1, keepdims=True)
        dx = (rstd * (dxn - m1 - xn * m2)).astype(_f32)
        red = tuple(range(g.ndim - 1))
        dgain = (g * xn).sum(axis=red).astype(_f32)
        dbias = g.sum(axis=red).astype(_f32)
        return [dx, dgain.reshape(gain.shape), dbias.reshape(bias.shape)]

    return _record(out, [a, gain, bias], bw, saves=(xn, rstd, gd))


# ---------------------------------------------------------------------------
# shape ops


def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    out = Tensor(a.data.reshape(shape))
    old = a.shape
    return _record(out, [a], lambda g: [np.ascontiguousarray(g.reshape(old))])


def transpose(a: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    out = Tensor(np.ascontiguousarray(a.data.transpose(axes)))
    inv = tuple(np.argsort(axes))
    return _record(out, [a], lambda g: [np.ascontiguousarray(g.transpose(inv))])


def concat(parts: Sequence[Tensor], axis: int = 0) -> Tensor:
    parts = list(parts)
    out = Tensor(np.concatenate([p.data for p in parts], axis=axis))
    sizes = [p.data.shape[axis] for p in parts]
    offsets = np.cumsum(sizes)[:-1]

    def bw(g):
        return [np.ascontiguousarray(piece) for piece in np.split(g, offsets, axis=axis)]

    return _record(out, parts, bw)


def slice_axis(a: Tensor, axis: int, start: int, stop: int) -> Tensor:
    idx = [slice(None)] * a.ndim
    idx[axis] = slice(start, stop)
    idx = tuple(idx)
    out = Tensor(np.ascontiguousarray(a.data[idx]))
    shape = a.shape

    def bw(g):
        full = np.zeros(shape, dtype=_f32)
        full[idx] = g
        return [full]

    return _record(out, [a], bw)


# ---------------------------------------------------------------------------
# reductions (accumulate in f64, store f32)


def reduce_sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = Tensor(a.data.sum(axis=axis, keepdims=keepdims, dtype=np.float64))
    shape = a.shape

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return [np.broadcast_to(g, shape).astype(_f32)]

    return _record(out, [a], bw)


def reduce_mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    count = a.size if axis is None else a.shape[axis]
    out = Tensor(a.data.mean(axis=axis, keepdims=keepdims, dtype=np.float64))
    shape = a.shape

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return [(np.broadcast_to(g, shape) / count).astype(_f32)]

    return _record(out, [a], bw)


def stop_grad(a: Tensor) -> Tensor:
    return Tensor(a.data, requires_grad=False)


# ---------------------------------------------------------------------------
# recompute-in-backward


def checkpoint(fn: Callable[..., Tensor], *args, has_params: bool = True) -> Tensor:
    """Run `fn` without recording; retain only the tensor args.

    When the surrounding tape reaches this node in backward, `fn` is re-run
    under a child tape (bytes counted toward the parent's peak only) and the
    chain rule is driven through the recomputation. Parameters touched
    inside `fn` accumulate into their `.grad` directly.

    `has_params` declares that `fn` closes over trainable tensors, which
    the arg inspection cannot see; pass False for a frozen/constant block
    so it neither records nor retains anything.
    """
    tp = active_tape()
    tensor_args = [a for a in args if isinstance(a, Tensor)]
    if tp is None or not (has_params or _wants_grad(tensor_args)):
        with no_tape():
            return fn(*args)
    with no_tape():
        out = fn(*args)
    out = Tensor(out.data)
    out.requires_grad = True

    saved = [(a.data, a.requires_grad) if isinstance(a, Tensor) else a for a in args]
    saved_arrays = [a.data for a in args if isinstance(a, Tensor)]
    node_tape = tp

    def bw(gout):
        locals_: list = []
        call_args: list = []
        for spec, orig in zip(saved, args):
            if isinstance(orig, Tensor):
                data, rg = spec
                local = Tensor(data, requires_grad=rg)
                locals_.append(local)
                call_args.append(local)
            else:
                locals_.append(None)
                call_args.append(orig)
        child = Tape(parent=node_tape)
        with child:
            out2 = fn(*call_args)
        _run_backward(child, out2, gout)
        grads = []
        for local in locals_:
            if local is None or local.grad is None:
                grads.append(None)
            else:
                grads.append(local.grad)
        return grads

    # _record would re-check arg liveness; the decision is already made here.
    tp.save(*saved_arrays)
    tp.add_node([a if isinstance(a, Tensor) else None for a in args], bw, out)
    return out


# ---------------------------------------------------------------------------
# backward


def _run_backward(tp: Tape, seed: Tensor, seed_grad: np.ndarray) -> None:
    grads: dict[int, np.ndarray] = {id(seed): np.asarray(seed_grad, dtype=_f32)}
    for node in reversed(tp.nodes):
        g = grads.pop(id(node.out), None)
        if g is None:
            continue
        parent_grads = node.bw(g)
        for parent, pg in zip(node.parents, parent_grads):
            if parent is None or pg is None:
                continue
            if parent.node is not None and parent.node.tape is tp:
                if parent.node.idx >= node.idx:
                    raise RuntimeError("cycle in tape")
                key = id(parent.node.out)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg
            elif parent.requires_grad and parent.node is None:
                if parent.grad is None:
                    parent.grad = np.zeros(parent.shape, dtype=_f32)
                parent.grad += pg
            # tensors from a foreign tape are treated as constants


def backward(loss: Tensor, params: Iterable[Tensor] = ()) -> dict[Tensor, np.ndarray]:
    """Drive gradients from a scalar loss; returns {param: grad}.

    Parameters not reachable from the loss get zero gradients. Gradients
    also accumulate into each leaf's `.grad`.
    """
    if loss.data.shape != ():
        raise ValueError(f"loss must be scalar, got shape {loss.data.shape}")
    params = list(params)
    if loss.node is not None:
        _run_backward(loss.node.tape, loss, np.ones((), dtype=_f32))
    out: dict[Tensor, np.ndarray] = {}
    for p in params:
        out[p] = p.grad if p.grad is not None else np.zeros(p.shape, dtype=_f32)
    return out


def zero_grads(params: Iterable[Tensor]) -> None:
    for p in params:
        p.grad = None
