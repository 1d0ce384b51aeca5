"""Reverse-mode automatic differentiation over dense float64 arrays.

Every operation builds a node graph hanging off its result; calling
``backward()`` on a scalar walks that graph once in reverse topological
order and accumulates ``grad`` buffers on every tensor that requires
them. The graph is per-forward-pass: it is consumed (freed) by
``backward()``, so repeated passes over the same parameters never share
state.

Also hosts the Adam optimizer (bias correction, linear warmup,
decoupled weight decay) used by the training loop.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Tensor",
    "parameter",
    "constant",
    "add",
    "mul",
    "matmul",
    "relu",
    "softmax",
    "log_softmax",
    "layer_norm",
    "tsum",
    "concat",
    "narrow",
    "transpose",
    "reshape",
    "gather_rows",
    "mask_fill",
    "dropout",
    "Adam",
]


class Tensor:
    """A dense float64 array that can participate in gradient tracking.

    Leaf tensors are created with :func:`parameter` (requires_grad=True)
    or :func:`constant`. Non-leaf tensors are produced by ops and carry
    the backward closure that propagates gradients to their parents.
    """

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def _accumulate(self, g: np.ndarray):
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64)
        else:
            self.grad += g

    def backward(self):
        """Populate gradients of everything reachable from this scalar.

        The op graph is consumed: after this call the node links are
        dropped so a second backward on the same graph is impossible.
        """
        if self.data.size != 1:
            raise ValueError(
                f"backward() requires a scalar loss, got shape {self.data.shape}"
            )
        topo: list[Tensor] = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self._accumulate(np.ones_like(self.data))
        for node in reversed(topo):
            if node._backward is not None:
                node._backward(node.grad)
                node._backward = None
                node._parents = ()
            if not node.requires_grad and node is not self:
                node.grad = None

    # Operator sugar; scalars are promoted to constants.
    def __add__(self, other):
        return add(self, _wrap(other))

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, _wrap(other))

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, _wrap(-1.0))

    def __sub__(self, other):
        return add(self, -_wrap(other))

    def __rsub__(self, other):
        return add(_wrap(other), -self)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("tensor/tensor division is not supported")
        return mul(self, _wrap(1.0 / other))

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def parameter(data) -> Tensor:
    return Tensor(data, requires_grad=True)


def constant(data) -> Tensor:
    return Tensor(data, requires_grad=False)


def _node(data, parents, backward) -> Tensor:
    out = Tensor(data)
    if any(p.requires_grad or p._parents for p in parents):
        out.requires_grad = any(p.requires_grad for p in parents)
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum gradient ``g`` down to ``shape`` (inverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    data = a.data + b.data

    def backward(g):
        a._accumulate(_unbroadcast(g, a.data.shape))
        b._accumulate(_unbroadcast(g, b.data.shape))

    return _node(data, (a, b), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    data = a.data * b.data

    def backward(g):
        a._accumulate(_unbroadcast(g * b.data, a.data.shape))
        b._accumulate(_unbroadcast(g * a.data, b.data.shape))

    return _node(data, (a, b), backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape[-1] != b.data.shape[-2 if b.data.ndim > 1 else 0]:
        raise ValueError(
            f"matmul inner dimensions disagree: {a.data.shape} @ {b.data.shape}"
        )
    data = a.data @ b.data

    def backward(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        a._accumulate(_unbroadcast(ga, a.data.shape))
        b._accumulate(_unbroadcast(gb, b.data.shape))

    return _node(data, (a, b), backward)


def relu(x: Tensor) -> Tensor:
    data = np.maximum(x.data, 0.0)

    def backward(g):
        x._accumulate(g * (x.data > 0.0))

    return _node(data, (x,), backward)


def _check_axis(x: Tensor, axis: int) -> int:
    if not -x.data.ndim <= axis < x.data.ndim:
        raise ValueError(f"axis {axis} invalid for shape {x.data.shape}")
    return axis % x.data.ndim


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Max-shifted softmax along ``axis``; -inf entries get exact weight 0."""
    axis = _check_axis(x, axis)
    shifted = x.data - np.max(x.data, axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        dot = (g * y).sum(axis=axis, keepdims=True)
        x._accumulate(y * (g - dot))

    return _node(y, (x,), backward)


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    axis = _check_axis(x, axis)
    shifted = x.data - np.max(x.data, axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = shifted - lse
    sm = np.exp(out)

    def backward(g):
        x._accumulate(g - sm * g.sum(axis=axis, keepdims=True))

    return _node(out, (x,), backward)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, epsilon: float = 1e-5) -> Tensor:
    """Standardize the last axis to zero mean / unit variance, then affine."""
    h = x.data.shape[-1]
    if h == 0:
        raise ValueError("layer_norm over an empty last axis")
    if gain.data.shape != (h,) or bias.data.shape != (h,):
        raise ValueError(
            f"gain/bias shapes {gain.data.shape}/{bias.data.shape} do not match width {h}"
        )
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + epsilon)
    xhat = centered * inv
    data = xhat * gain.data + bias.data

    def backward(g):
        axes = tuple(range(g.ndim - 1))
        gain._accumulate((g * xhat).sum(axis=axes))
        bias._accumulate(g.sum(axis=axes))
        gx = g * gain.data
        x._accumulate(
            inv
            * (
                gx
                - gx.mean(axis=-1, keepdims=True)
                - xhat * (gx * xhat).mean(axis=-1, keepdims=True)
            )
        )

    return _node(data, (x, gain, bias), backward)


def tsum(x: Tensor, axis=None) -> Tensor:
    data = x.data.sum(axis=axis)

    def backward(g):
        if axis is None:
            x._accumulate(np.full_like(x.data, float(g)))
        else:
            x._accumulate(np.broadcast_to(np.expand_dims(g, axis), x.data.shape))

    return _node(data, (x,), backward)


def concat(parts: list[Tensor], axis: int = 0) -> Tensor:
    data = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.data.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(lo, hi)
            p._accumulate(g[tuple(idx)])

    return _node(data, tuple(parts), backward)


def narrow(x: Tensor, axis: int, start: int, length: int) -> Tensor:
    """Contiguous slice [start, start+length) along ``axis``."""
    axis = _check_axis(x, axis)
    idx = [slice(None)] * x.data.ndim
    idx[axis] = slice(start, start + length)
    idx = tuple(idx)
    data = x.data[idx]

    def backward(g):
        full = np.zeros_like(x.data)
        full[idx] = g
        x._accumulate(full)

    return _node(data, (x,), backward)


def transpose(x: Tensor) -> Tensor:
    data = np.swapaxes(x.data, -1, -2)

    def backward(g):
        x._accumulate(np.swapaxes(g, -1, -2))

    return _node(data, (x,), backward)


def reshape(x: Tensor, shape) -> Tensor:
    data = x.data.reshape(shape)

    def backward(g):
        x._accumulate(g.reshape(x.data.shape))

    return _node(data, (x,), backward)


def gather_rows(table: Tensor, indices) -> Tensor:
    """Select rows of a 2-D table; gradients scatter-add back to the rows."""
    idx = np.asarray(indices, dtype=np.int64)
    data = table.data[idx]

    def backward(g):
        full = np.zeros_like(table.data)
        np.add.at(full, idx, g)
        table._accumulate(full)

    return _node(data, (table,), backward)


def mask_fill(x: Tensor, allowed: np.ndarray, value: float = -np.inf) -> Tensor:
    """Replace disallowed entries with ``value``; their gradients are 0."""
    allowed = np.asarray(allowed, dtype=bool)
    data = np.where(allowed, x.data, value)

    def backward(g):
        x._accumulate(np.where(allowed, g, 0.0))

    return _node(data, (x,), backward)


def dropout(x: Tensor, p: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout: survivors scaled by 1/(1-p). Call only in training."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability {p} outside [0, 1)")
    if p == 0.0:
        return x
    keep = (rng.random(x.data.shape) >= p) / (1.0 - p)
    data = x.data * keep

    def backward(g):
        x._accumulate(g * keep)

    return _node(data, (x,), backward)


class Adam:
    """Adam with bias correction, linear warmup, decoupled weight decay.

    ``params`` is an ordered name -> Tensor map; moment buffers exist for
    exactly that set. Effective learning rate ramps linearly from 0 to
    ``lr`` over ``warmup_steps`` and stays constant afterwards.
    """

    def __init__(
        self,
        params: dict[str, Tensor],
        lr: float = 1e-3,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
        weight_decay: float = 0.0,
        warmup_steps: int = 0,
    ):
        if lr < 0 or weight_decay < 0 or warmup_steps < 0:
            raise ValueError("lr, weight_decay and warmup_steps must be non-negative")
        self.params = dict(params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.warmup_steps = warmup_steps
        self.step_count = 0
        self.first_moment = {k: np.zeros_like(v.data) for k, v in self.params.items()}
        self.second_moment = {k: np.zeros_like(v.data) for k, v in self.params.items()}

    def effective_lr(self, step: int | None = None) -> float:
        t = self.step_count if step is None else step
        if self.warmup_steps > 0:
            return self.lr * min(1.0, t / self.warmup_steps)
        return self.lr

    def step(self):
        for name, p in self.params.items():
            if p.grad is None:
                raise ValueError(f"parameter '{name}' has no gradient; run backward first")
        self.step_count += 1
        lr_t = self.effective_lr()
        bc1 = 1.0 - self.beta1**self.step_count
        bc2 = 1.0 - self.beta2**self.step_count
        for name, p in self.params.items():
            g = p.grad
            m = self.first_moment[name]
            v = self.second_moment[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            update = (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            if self.weight_decay:
                update = update + self.weight_decay * p.data
            p.data -= lr_t * update

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None


def uniform_init(rng: np.random.Generator, shape, bound: float) -> Tensor:
    """Parameter tensor with entries uniform in (-bound, bound)."""
    return parameter(rng.uniform(-bound, bound, size=shape))
