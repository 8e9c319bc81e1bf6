"""Reverse-mode automatic differentiation over numpy float64 arrays.

A small tape sized for this project: the recursive network is rebuilt per
minibatch anyway (its shape follows the tree), so a define-by-run graph of
Tensor nodes is the natural fit.  Everything is float64; gradients accumulate
by summation, and broadcasting in add/mul is handled by summing the gradient
back to the operand's shape.
"""

from __future__ import annotations

import numpy as np


class Tensor:
    __slots__ = ("data", "grad", "parents", "_backward", "requires_grad")

    def __init__(self, data, parents=(), backward=None, requires_grad=True):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.parents = parents
        self._backward = backward
        self.requires_grad = requires_grad

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape})"

    def backward(self, seed=None):
        """Run reverse accumulation from this node (default seed: ones)."""
        topo = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node.parents:
                if id(p) not in visited:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data) if seed is None \
            else np.asarray(seed, dtype=np.float64)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = g.copy()
        else:
            self.grad += g


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum gradient g back down to `shape` after numpy broadcasting."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def constant(data) -> Tensor:
    return Tensor(data, requires_grad=False)


def _as_array(x):
    return x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)


def add(a: Tensor, b) -> Tensor:
    bd = _as_array(b)
    bt = b if isinstance(b, Tensor) else None
    out = Tensor(a.data + bd, parents=(a, bt) if bt is not None else (a,))

    def backward(g):
        a._accumulate(_unbroadcast(g, a.data.shape))
        if bt is not None:
            bt._accumulate(_unbroadcast(g, bt.data.shape))
    out._backward = backward
    return out


def mul(a: Tensor, b) -> Tensor:
    bd = _as_array(b)
    bt = b if isinstance(b, Tensor) else None
    out = Tensor(a.data * bd, parents=(a, bt) if bt is not None else (a,))

    def backward(g):
        a._accumulate(_unbroadcast(g * bd, a.data.shape))
        if bt is not None:
            bt._accumulate(_unbroadcast(g * a.data, bt.data.shape))
    out._backward = backward
    return out


def matmul(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data @ b.data, parents=(a, b))

    def backward(g):
        a._accumulate(g @ b.data.T)
        b._accumulate(a.data.T @ g)
    out._backward = backward
    return out


def sigmoid(a: Tensor) -> Tensor:
    y = 1.0 / (1.0 + np.exp(-a.data))
    out = Tensor(y, parents=(a,))

    def backward(g):
        a._accumulate(g * y * (1.0 - y))
    out._backward = backward
    return out


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)
    out = Tensor(y, parents=(a,))

    def backward(g):
        a._accumulate(g * (1.0 - y * y))
    out._backward = backward
    return out


def rows(table: Tensor, idx: np.ndarray) -> Tensor:
    """Gather rows of a 2-D table (embedding lookup)."""
    idx = np.asarray(idx, dtype=np.int64)
    out = Tensor(table.data[idx], parents=(table,))

    def backward(g):
        acc = np.zeros_like(table.data)
        np.add.at(acc, idx, g)
        table._accumulate(acc)
    out._backward = backward
    return out


def total(a: Tensor) -> Tensor:
    """Sum of all entries as a 0-d tensor."""
    out = Tensor(a.data.sum(), parents=(a,))

    def backward(g):
        a._accumulate(np.broadcast_to(g, a.data.shape).astype(np.float64))
    out._backward = backward
    return out


def add_n(tensors) -> Tensor:
    """Sum a list of same-shaped tensors."""
    tensors = list(tensors)
    out = Tensor(np.sum([t.data for t in tensors], axis=0), parents=tuple(tensors))

    def backward(g):
        for t in tensors:
            t._accumulate(g)
    out._backward = backward
    return out


def weighted_cross_entropy(logits: Tensor, targets: np.ndarray,
                           weights: np.ndarray) -> Tensor:
    """sum_i w_i * CE(softmax(logits_i), targets_i) over the batch rows.

    logits: (B, V); targets: (B,) int; weights: (B,) float constants.
    """
    z = logits.data
    zmax = z.max(axis=1, keepdims=True)
    ez = np.exp(z - zmax)
    log_probs = (z - zmax) - np.log(ez.sum(axis=1, keepdims=True))
    b = np.arange(z.shape[0])
    losses = -log_probs[b, targets]
    out = Tensor(float((weights * losses).sum()), parents=(logits,))
    probs = ez / ez.sum(axis=1, keepdims=True)

    def backward(g):
        grad = probs.copy()
        grad[b, targets] -= 1.0
        grad *= (g * weights)[:, None]
        logits._accumulate(grad)
    out._backward = backward
    return out


def blend(t: np.ndarray, a: Tensor, b: Tensor) -> Tensor:
    """(1 - t) * a + t * b with t a constant array broadcast over columns.

    Used for the swap-aware child exchange: exact role swap at t in {0, 1}.
    """
    return add(mul(a, 1.0 - t), mul(b, t))


def dropout(a: Tensor, rate: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout; identity when rate is 0."""
    if rate <= 0.0:
        return a
    mask = (rng.random(a.data.shape) >= rate) / (1.0 - rate)
    return mul(a, mask)
