"""Reverse-mode autodiff over float64 numpy arrays.

Only what the coreference and empty-node models need: dense 2-D algebra,
activations, dropout, softmax family, losses, and masked dot-product scores.
Graph edges are recorded only when some input requires a gradient.
"""

from __future__ import annotations

import zlib
from typing import Callable, Sequence

import numpy as np

# Stand-in for -inf in masked logits; exp() of it underflows to exactly 0.
MASK_VALUE = -1e30


class NonFiniteError(FloatingPointError):
    pass


def rng_for(seed: int, *keys: int | str) -> np.random.Generator:
    """Counter-based generator keyed by ``(seed, *keys)``; strings are folded through crc32."""
    words = [int(seed)] + [zlib.crc32(k.encode()) if isinstance(k, str) else int(k) for k in keys]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(words)))


def _check(data: np.ndarray) -> np.ndarray:
    if not np.isfinite(data).all():
        raise NonFiniteError("non-finite value produced")
    return data


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False,
                 _parents: tuple = (), _backward: Callable | None = None):
        self.data = _check(np.asarray(data, dtype=np.float64))
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            self.grad += g

    def backward(self) -> None:
        if self.data.size != 1:
            raise ValueError("backward() needs a scalar")
        order: list[Tensor] = []
        seen: set[int] = set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in seen:
                    stack.append((parent, False))
        grads = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node._accumulate(g)
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                if id(parent) in grads:
                    grads[id(parent)] = grads[id(parent)] + pg
                else:
                    grads[id(parent)] = pg


def param(data) -> Tensor:
    return Tensor(data, requires_grad=True)


def const(data) -> Tensor:
    return data if isinstance(data, Tensor) else Tensor(data)


def _result(data, parents: Sequence[Tensor], backward: Callable) -> Tensor:
    if any(p.requires_grad for p in parents):
        return Tensor(data, True, tuple(parents), backward)
    return Tensor(data)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# algebra


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul shape mismatch {a.shape} @ {b.shape}")
    return _result(a.data @ b.data, (a, b), lambda g: (g @ b.data.T, a.data.T @ g))


def add(a: Tensor, b: Tensor) -> Tensor:
    try:
        out = a.data + b.data
    except ValueError:
        raise ValueError(f"add shape mismatch {a.shape} + {b.shape}") from None
    return _result(out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def add_bias(x: Tensor, bias: Tensor) -> Tensor:
    if bias.data.ndim != 1 or bias.shape[0] != x.shape[-1]:
        raise ValueError(f"bias shape {bias.shape} does not fit {x.shape}")
    return add(x, bias)


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = a.data * b.data
    return _result(out, (a, b), lambda g: (_unbroadcast(g * b.data, a.shape),
                                           _unbroadcast(g * a.data, b.shape)))


def scale(x: Tensor, c: float) -> Tensor:
    return _result(x.data * c, (x,), lambda g: (g * c,))


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    y = matmul(x, w)
    return add_bias(y, b) if b is not None else y


def transpose(x: Tensor) -> Tensor:
    return _result(x.data.T, (x,), lambda g: (g.T,))


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    data = np.concatenate([t.data for t in tensors], axis=axis)
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=axis))
    return _result(data, tuple(tensors), backward)


def take_rows(x: Tensor, index) -> Tensor:
    """Gather rows; repeated indices accumulate their gradients."""
    index = np.asarray(index, dtype=np.int64)

    def backward(g):
        full = np.zeros_like(x.data)
        np.add.at(full, index, g)
        return (full,)
    return _result(x.data[index], (x,), backward)


def tensor_sum(x: Tensor) -> Tensor:
    return _result(np.array(x.data.sum()), (x,), lambda g: (np.broadcast_to(g, x.shape),))


def add_scalars(terms: Sequence[Tensor]) -> Tensor:
    data = np.array(sum(float(t.data) for t in terms))
    return _result(data, tuple(terms), lambda g: tuple(g for _ in terms))


# ---------------------------------------------------------------------------
# nonlinearities


def relu(x: Tensor) -> Tensor:
    active = x.data > 0
    return _result(np.where(active, x.data, 0.0), (x,), lambda g: (g * active,))


def sigmoid(x: Tensor) -> Tensor:
    out = 0.5 * (1.0 + np.tanh(0.5 * x.data))
    return _result(out, (x,), lambda g: (g * out * (1.0 - out),))


def dropout(x: Tensor, rate: float, rng: np.random.Generator | None, training: bool) -> Tensor:
    """Inverted dropout: identity in eval mode, ``1/(1-rate)`` rescaling in training."""
    if not training or rate == 0.0:
        return x
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate {rate} outside [0, 1)")
    mask = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return _result(x.data * mask, (x,), lambda g: (g * mask,))


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)
    return _result(out, (x,), backward)


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = shifted - lse
    probs = np.exp(out)

    def backward(g):
        return (g - probs * g.sum(axis=axis, keepdims=True),)
    return _result(out, (x,), backward)


# ---------------------------------------------------------------------------
# losses and attention


def cross_entropy(logits: Tensor, targets) -> Tensor:
    """Summed categorical cross-entropy of rows of ``logits`` against integer ``targets``."""
    targets = np.asarray(targets, dtype=np.int64)
    if logits.data.ndim != 2 or targets.shape != (logits.shape[0],):
        raise ValueError(f"cross_entropy shape mismatch {logits.shape} vs {targets.shape}")
    logp = log_softmax(logits).data
    rows = np.arange(len(targets))
    loss = -logp[rows, targets].sum()

    def backward(g):
        grad = np.exp(logp)
        grad[rows, targets] -= 1.0
        return (grad * g,)
    return _result(np.array(loss), (logits,), backward)


def binary_cross_entropy(logits: Tensor, targets) -> Tensor:
    """Summed sigmoid cross-entropy, computed from logits for stability."""
    targets = np.asarray(targets, dtype=np.float64)
    if targets.shape != logits.shape:
        raise ValueError(f"binary_cross_entropy shape mismatch {logits.shape} vs {targets.shape}")
    z = logits.data
    loss = (np.maximum(z, 0) - z * targets + np.log1p(np.exp(-np.abs(z)))).sum()
    prob = 0.5 * (1.0 + np.tanh(0.5 * z))
    return _result(np.array(loss), (logits,), lambda g: ((prob - targets) * g,))


def scaled_dot_attention(q: Tensor, k: Tensor, mask: np.ndarray | None = None) -> Tensor:
    """Scores ``q k^T / sqrt(d)``; entries where ``mask`` is False become MASK_VALUE."""
    if q.data.ndim != 2 or k.data.ndim != 2 or q.shape[1] != k.shape[1]:
        raise ValueError(f"attention shape mismatch {q.shape} vs {k.shape}")
    factor = 1.0 / np.sqrt(q.shape[1])
    raw = q.data @ k.data.T * factor
    if mask is None:
        out, keep = raw, None
    else:
        keep = np.asarray(mask, dtype=bool)
        out = np.where(keep, raw, MASK_VALUE)

    def backward(g):
        if keep is not None:
            g = g * keep
        g = g * factor
        return g @ k.data, g.T @ q.data
    return _result(out, (q, k), backward)
