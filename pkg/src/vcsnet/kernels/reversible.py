"""Backpropagation through chains of additive-coupling blocks without stored activations.

A block exposes callables ``F`` and ``G`` (Tensor -> Tensor, same shape) and
``parameters()``.  Forward: ``y1 = x1 + F(x2)``, ``y2 = x2 + G(y1)``.
"""
from typing import NamedTuple

import numpy as np

from ..exceptions import DimensionError, NumericError
from .tensor import Node, Tensor, backward, enable_grad, is_grad_enabled, make_result, no_grad
from . import ops


class RevGrads(NamedTuple):
    grad_in: tuple
    param_grads: list
    inputs: tuple


def block_forward(block, s1, s2):
    if s1.shape != s2.shape:
        raise DimensionError(f"coupling halves differ in shape: {s1.shape} vs {s2.shape}")
    y1 = s1 + block.F(s2)
    y2 = s2 + block.G(y1)
    return y1, y2


def block_inverse(block, y1, y2):
    if y1.shape != y2.shape:
        raise DimensionError(f"coupling halves differ in shape: {y1.shape} vs {y2.shape}")
    x2 = y2 - block.G(y1)
    x1 = y1 - block.F(x2)
    return x1, x2


def _param_grad(p):
    return np.zeros_like(p.data) if p.grad is None else p.grad


def _check_finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NumericError("non-finite activation recovered while inverting a block")


def reversible_backward(blocks, s_out, grad_out):
    """Gradients of a block chain from its output alone.

    Walks blocks last to first: the block input is recovered by the inverse
    map, the block is re-run on a local tape, and the gradient is pushed
    through that tape, which is then dropped.  Only one block's tape is alive
    at any time.

    ``s_out`` and ``grad_out`` are pairs of ndarrays.  Returns ``RevGrads``
    with the input gradient pair, the parameter gradients (ordered as
    ``[p for b in blocks for p in b.parameters()]``) and the recovered inputs.
    """
    y1, y2 = (np.asarray(a) for a in s_out)
    dy1, dy2 = (np.asarray(a) for a in grad_out)
    per_block = []
    for block in reversed(blocks):
        params = list(block.parameters())
        saved_grads = [p.grad for p in params]
        for p in params:
            p.grad = None
        with enable_grad():
            y1_t = Tensor(y1, requires_grad=True)
            gy1 = block.G(y1_t)
            backward(gy1, dy2)
        with no_grad():
            x2 = y2 - gy1.data
        d_y1_total = dy1 + y1_t.grad
        with enable_grad():
            x2_t = Tensor(x2, requires_grad=True)
            fx2 = block.F(x2_t)
            backward(fx2, d_y1_total)
        x1 = y1 - fx2.data
        _check_finite(x1, x2)
        dx1 = d_y1_total
        dx2 = dy2 + x2_t.grad
        per_block.append([_param_grad(p) for p in params])
        for p, g in zip(params, saved_grads):
            p.grad = g
        y1, y2, dy1, dy2 = x1, x2, dx1, dx2
    param_grads = [g for grads in reversed(per_block) for g in grads]
    return RevGrads((dy1, dy2), param_grads, (y1, y2))


def reversible_chain(blocks, x):
    """Tape op running ``blocks`` on ``x`` (channels split in half).

    Only the chain output is saved on the tape; the backward recomputes block
    inputs with ``reversible_backward`` and accumulates parameter gradients
    directly into each parameter's ``.grad``.
    """
    s1, s2 = np.split(x.data, 2, axis=-4)
    with no_grad():
        a, b = Tensor(s1), Tensor(s2)
        for blk in blocks:
            a, b = block_forward(blk, a, b)
    out = np.concatenate([a.data, b.data], axis=-4)
    params = [p for blk in blocks for p in blk.parameters()]

    def bw(saved, g):
        (y,) = saved
        r = reversible_backward(blocks, np.split(y, 2, axis=-4), np.split(g, 2, axis=-4))
        for p, pg in zip(params, r.param_grads):
            if p.requires_grad:
                p.grad = pg.copy() if p.grad is None else p.grad + pg
        return (np.concatenate(r.grad_in, axis=-4),)

    res = make_result("reversible_chain", out, (x,), (out,), bw)
    if res.node is None and is_grad_enabled() and any(p.requires_grad for p in params):
        res.requires_grad = True
        res.node = Node("reversible_chain", (x,), (out,), bw)
    return res


def stored_chain(blocks, x):
    """Same map as ``reversible_chain`` but every block activation stays on the tape."""
    a, b = ops.split_channels(x)
    for blk in blocks:
        a, b = block_forward(blk, a, b)
    return ops.concat_channels([a, b])
