"""Small reverse-mode autodiff over numpy arrays with gradients of gradients.

Every backward rule is written with the same differentiable ops, so calling
``grad(..., create_graph=True)`` records the backward pass as ordinary graph
nodes that a second ``grad`` call can differentiate (needed for the
gradient-norm penalty of WGAN-GP).
"""
from __future__ import annotations

from contextlib import contextmanager

import numpy as np

_GRAD_ENABLED = True


@contextmanager
def no_grad():
    """Ops inside the block produce constants (no parents, no backward)."""
    global _GRAD_ENABLED
    prev, _GRAD_ENABLED = _GRAD_ENABLED, False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


class Node:
    __slots__ = ("value", "parents", "backward", "op", "requires_grad")

    def __init__(self, value, requires_grad=False, parents=(), backward=None, op="leaf"):
        self.value = np.asarray(value)
        self.requires_grad = requires_grad
        self.parents = parents
        self.backward = backward
        self.op = op

    shape = property(lambda self: self.value.shape)
    ndim = property(lambda self: self.value.ndim)
    dtype = property(lambda self: self.value.dtype)
    T = property(lambda self: transpose(self))

    def __repr__(self):
        return f"Node(op={self.op}, shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, o):
        return add(self, o)

    __radd__ = __add__

    def __sub__(self, o):
        return add(self, neg(o) if isinstance(o, Node) else -np.asarray(o))

    def __rsub__(self, o):
        return add(neg(self), o)

    def __mul__(self, o):
        return mul(self, o)

    __rmul__ = __mul__

    def __truediv__(self, o):
        if isinstance(o, Node):
            return mul(self, power(o, -1.0))
        return mul(self, 1.0 / o)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, o):
        return matmul(self, o)

    def __pow__(self, p):
        return power(self, p)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def numpy(self) -> np.ndarray:
        return self.value


def _as_node(x, like: Node | None = None) -> Node:
    if isinstance(x, Node):
        return x
    dtype = like.dtype if like is not None and like.dtype.kind == "f" else None
    return Node(np.asarray(x, dtype=dtype))


def _make(value, parents, backward, op) -> Node:
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        return Node(value, True, parents, backward, op)
    return Node(value)


def add(a, b) -> Node:
    if not isinstance(a, Node):
        a, b = b, a
    if not isinstance(b, Node) and np.ndim(b) == 0:
        s = float(b)
        return _make(a.value + s, (a,), lambda g: (g,), "shift")
    a = _as_node(a, b if isinstance(b, Node) else None)
    b = _as_node(b, a)

    def back(g):
        return sum_to(g, a.shape), sum_to(g, b.shape)

    return _make(a.value + b.value, (a, b), back, "add")


def neg(a) -> Node:
    a = _as_node(a)
    return _make(-a.value, (a,), lambda g: (neg(g),), "neg")


def mul(a, b) -> Node:
    if not isinstance(a, Node):
        a, b = b, a
    if not isinstance(b, Node) and np.ndim(b) == 0:
        s = float(b)
        return _make(a.value * s, (a,), lambda g: (mul(g, s),), "scale")
    b = _as_node(b, a)

    def back(g):
        return sum_to(mul(g, b), a.shape), sum_to(mul(g, a), b.shape)

    return _make(a.value * b.value, (a, b), back, "mul")


def matmul(a, b) -> Node:
    a = _as_node(a, b if isinstance(b, Node) else None)
    b = _as_node(b, a)
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError("matmul supports 2-D operands only")

    def back(g):
        return matmul(g, transpose(b)), matmul(transpose(a), g)

    return _make(a.value @ b.value, (a, b), back, "matmul")


def transpose(a) -> Node:
    a = _as_node(a)
    return _make(a.value.T, (a,), lambda g: (transpose(g),), "transpose")


def reshape(a, shape) -> Node:
    a = _as_node(a)
    old = a.shape
    return _make(a.value.reshape(shape), (a,), lambda g: (reshape(g, old),), "reshape")


def power(a, p: float) -> Node:
    a = _as_node(a)
    p = float(p)

    def back(g):
        if p == 2.0:
            return (mul(g, mul(a, 2.0)),)
        return (mul(g, mul(power(a, p - 1.0), p)),)

    return _make(a.value**p, (a,), back, f"pow{p:g}")


def sqrt(a) -> Node:
    return power(a, 0.5)


def square(a) -> Node:
    return power(a, 2.0)


def sum_(a, axis=None, keepdims=False) -> Node:
    a = _as_node(a)
    shape = a.shape
    kept = np.sum(a.value, axis=axis, keepdims=True).shape

    def back(g):
        return (broadcast_to(reshape(g, kept), shape),)

    return _make(np.sum(a.value, axis=axis, keepdims=keepdims), (a,), back, "sum")


def mean(a, axis=None, keepdims=False) -> Node:
    a = _as_node(a)
    if axis is None:
        count = a.value.size
    else:
        axes = (axis,) if np.ndim(axis) == 0 else tuple(axis)
        count = int(np.prod([a.shape[i] for i in axes]))
    return mul(sum_(a, axis, keepdims), 1.0 / count)


def broadcast_to(a, shape) -> Node:
    a = _as_node(a)
    shape = tuple(shape)
    if a.shape == shape:
        return a
    old = a.shape
    return _make(np.broadcast_to(a.value, shape), (a,), lambda g: (sum_to(g, old),), "broadcast")


def sum_to(a, shape) -> Node:
    """Sum ``a`` down to ``shape`` (inverse of numpy broadcasting)."""
    a = _as_node(a)
    shape = tuple(shape)
    if a.shape == shape:
        return a
    lead = a.ndim - len(shape)
    axes = tuple(range(lead)) + tuple(
        lead + i for i, n in enumerate(shape) if n == 1 and a.shape[lead + i] != 1
    )
    value = np.sum(a.value, axis=axes, keepdims=True).reshape(shape)
    old = a.shape
    return _make(value, (a,), lambda g: (broadcast_to(g, old),), "sum_to")


def leaky_relu(a, slope: float = 0.2) -> Node:
    a = _as_node(a)
    mask = np.where(a.value > 0, 1.0, slope).astype(a.dtype)
    return mul(a, Node(mask))


def _toposort(root: Node) -> list[Node]:
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def grad(output: Node, inputs, create_graph: bool = False) -> list[Node]:
    """Gradients of scalar ``output`` w.r.t. each node in ``inputs``.

    Inputs that ``output`` does not depend on get a zero gradient. With
    ``create_graph`` the returned nodes carry their own graph.
    """
    if output.value.size != 1:
        raise ValueError(f"grad needs a scalar output, got shape {output.shape}")
    inputs = list(inputs)
    wanted = {id(x) for x in inputs}
    grads: dict[int, Node] = {}
    global _GRAD_ENABLED
    prev, _GRAD_ENABLED = _GRAD_ENABLED, bool(create_graph)
    try:
        if output.requires_grad:
            grads[id(output)] = Node(np.ones_like(output.value))
            for node in reversed(_toposort(output)):
                keep = id(node) in wanted or node.backward is None
                g = grads.get(id(node)) if keep else grads.pop(id(node), None)
                if g is None or node.backward is None:
                    continue
                for p, pg in zip(node.parents, node.backward(g)):
                    if pg is None or not p.requires_grad:
                        continue
                    key = id(p)
                    grads[key] = pg if key not in grads else add(grads[key], pg)
        out = []
        for x in inputs:
            g = grads.get(id(x))
            out.append(g if g is not None else Node(np.zeros_like(x.value)))
        return out
    finally:
        _GRAD_ENABLED = prev
