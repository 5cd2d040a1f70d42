"""Tensor with a reverse-mode tape.

Every differentiable op creates a ``Node`` holding its parents, the arrays its
backward needs and a backward function.  ``backward`` walks the graph once in
reverse topological order and frees each node's saved arrays as soon as its
gradient has been propagated.  Saved bytes are tracked by ``METER`` so memory
behaviour can be asserted without wall-clock or RSS measurements.
"""
from contextlib import contextmanager

import numpy as np

from ..exceptions import NumericError


class ActivationMeter:
    """Counts bytes held by live tape nodes and the high-water mark."""

    def __init__(self):
        self.current = 0
        self.peak = 0

    def reset(self):
        self.current = 0
        self.peak = 0

    def add(self, n):
        self.current += n
        if self.current > self.peak:
            self.peak = self.current

    def release(self, n):
        self.current -= n


METER = ActivationMeter()

_GRAD_ENABLED = True


def is_grad_enabled():
    return _GRAD_ENABLED


@contextmanager
def _grad_mode(flag):
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = flag
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def no_grad():
    return _grad_mode(False)


def enable_grad():
    return _grad_mode(True)


class Node:
    __slots__ = ("op", "parents", "saved", "backward_fn", "nbytes")

    def __init__(self, op, parents, saved, backward_fn):
        self.op = op
        self.parents = parents
        self.saved = saved
        self.backward_fn = backward_fn
        self.nbytes = sum(a.nbytes for a in saved if isinstance(a, np.ndarray))
        METER.add(self.nbytes)

    def free(self):
        if self.saved is not None:
            METER.release(self.nbytes)
            self.saved = None

    def __del__(self):
        # nodes dropped without a backward pass still give their bytes back
        try:
            self.free()
        except Exception:
            pass


class Tensor:
    """Dense array plus optional gradient slot and producing node.

    Layout convention for network activations: ``[batch, channel, time, height, width]``.
    """

    __slots__ = ("data", "grad", "requires_grad", "node", "name", "__weakref__")

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.asarray(data)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.node = None
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self):
        return self.data.ndim

    def numpy(self):
        return self.data

    def detach(self):
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def backward(self, grad=None):
        backward(self, grad)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    def __add__(self, other):
        from .ops import add
        return add(self, other)

    def __radd__(self, other):
        from .ops import add
        return add(self, other)

    def __sub__(self, other):
        from .ops import sub
        return sub(self, other)

    def __mul__(self, other):
        from .ops import scale
        if isinstance(other, Tensor):
            raise TypeError("elementwise tensor product is not supported; use ops.mul")
        return scale(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        from .ops import scale
        return scale(self, -1.0)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def make_result(op, data, parents, saved, backward_fn):
    """Wrap ``data`` as an op output and record a node if any parent needs grad."""
    out = Tensor(data)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out.node = Node(op, tuple(parents), tuple(saved), backward_fn)
    return out


def _topo_order(root):
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        t, expanded = stack.pop()
        if expanded:
            order.append(t)
            continue
        if id(t) in seen:
            continue
        seen.add(id(t))
        stack.append((t, True))
        if t.node is not None:
            for p in t.node.parents:
                if id(p) not in seen:
                    stack.append((p, False))
    return order


def backward(root, grad=None):
    """Accumulate d(root)/d(leaf) into ``leaf.grad`` for every leaf needing grad."""
    if grad is None:
        if root.data.size != 1:
            raise ValueError("grad must be given for non-scalar roots")
        grad = np.ones_like(root.data)
    grad = np.asarray(grad, dtype=root.dtype)
    if not np.all(np.isfinite(grad)):
        raise NumericError("non-finite upstream gradient")
    order = _topo_order(root)
    grads = {id(root): grad}
    for t in reversed(order):
        g = grads.pop(id(t), None)
        node = t.node
        if node is None:
            if t.requires_grad and g is not None:
                t.grad = g.copy() if t.grad is None else t.grad + g
            continue
        if node.saved is None:
            raise RuntimeError(f"tape node '{node.op}' was already consumed by a previous backward")
        if g is not None:
            parent_grads = node.backward_fn(node.saved, g)
            for p, pg in zip(node.parents, parent_grads):
                if pg is None or not p.requires_grad:
                    continue
                key = id(p)
                grads[key] = grads[key] + pg if key in grads else pg
        node.free()
