"""Differentiable ops.

Raw kernels (``conv3d_forward`` / ``conv3d_backward``) work on ndarrays with
shape ``[C, T, H, W]`` or ``[N, C, T, H, W]``; the Tensor-level wrappers
(``conv3d``, ``leaky_relu``, ...) record tape nodes.
"""
import numpy as np

from ..exceptions import DimensionError
from .tensor import Tensor, as_tensor, make_result


def _triple(v):
    if np.isscalar(v):
        return (int(v),) * 3
    v = tuple(int(a) for a in v)
    if len(v) != 3:
        raise DimensionError(f"expected 3 values, got {v}")
    return v


def _out_size(n, k, s, p):
    return (n + 2 * p - k) // s + 1


def _im2col(xp, ksize, stride, out_dims):
    """Columns laid out channel-first: (N, C*kt*kh*kw, To*Ho*Wo)."""
    kt, kh, kw = ksize
    st, sh, sw = stride
    to, ho, wo = out_dims
    n, c = xp.shape[:2]
    cols = np.empty((n, c, kt, kh, kw, to, ho, wo), dtype=xp.dtype)
    for a in range(kt):
        for b in range(kh):
            for d in range(kw):
                cols[:, :, a, b, d] = xp[:, :, a:a + st * to:st, b:b + sh * ho:sh, d:d + sw * wo:sw]
    return cols.reshape(n, c * kt * kh * kw, to * ho * wo)


def _pad(x, pad):
    pt, ph, pw = pad
    if not any(pad):
        return x
    return np.pad(x, ((0, 0), (0, 0), (pt, pt), (ph, ph), (pw, pw)))


def _expected_out(x_shape, w_shape, stride, pad):
    return tuple(_out_size(a, k, s, p) for a, k, s, p in zip(x_shape[2:], w_shape[2:], stride, pad))


def conv3d_forward(x, w, b=None, stride=1, pad=0):
    """Cross-correlation over (time, height, width) with zero padding.

    Returns ``(out, ctx)``; ``ctx`` is what ``conv3d_backward`` needs.
    """
    squeeze = x.ndim == 4
    if squeeze:
        x = x[None]
    if x.ndim != 5 or w.ndim != 5:
        raise DimensionError(f"conv3d expects 5-D input and weight, got {x.shape} and {w.shape}")
    stride, pad = _triple(stride), _triple(pad)
    n, c = x.shape[:2]
    o, ci = w.shape[:2]
    if ci != c:
        raise DimensionError(f"input has {c} channels, weight expects {ci}")
    if b is not None and b.shape != (o,):
        raise DimensionError(f"bias shape {b.shape} does not match {o} output channels")
    out_dims = _expected_out(x.shape, w.shape, stride, pad)
    if min(out_dims) < 1:
        raise DimensionError(f"kernel {w.shape[2:]} larger than padded input {x.shape[2:]}")
    cols = _im2col(_pad(x, pad), w.shape[2:], stride, out_dims)
    out = np.matmul(w.reshape(o, -1), cols).reshape((n, o) + out_dims)
    if b is not None:
        out += b[:, None, None, None]
    ctx = (x, w, stride, pad, b is not None, squeeze)
    return (out[0] if squeeze else out), ctx


def conv3d_backward(ctx, grad_out):
    """Exact gradients of ``conv3d_forward``: ``(grad_x, grad_w, grad_b)``."""
    x, w, stride, pad, has_bias, squeeze = ctx
    if squeeze:
        grad_out = grad_out[None]
    n, c, t, h, wd = x.shape
    o, _, kt, kh, kw = w.shape
    out_dims = _expected_out(x.shape, w.shape, stride, pad)
    if grad_out.shape != (n, o) + out_dims:
        raise RuntimeError(f"grad_out shape {grad_out.shape} does not match the saved forward")
    st, sh, sw = stride
    pt, ph, pw = pad
    to, ho, wo = out_dims
    g = grad_out.reshape(n, o, -1)

    xp = _pad(x, pad)
    cols = _im2col(xp, (kt, kh, kw), stride, out_dims)
    grad_w = g[0] @ cols[0].T
    for i in range(1, n):
        grad_w += g[i] @ cols[i].T
    grad_w = grad_w.reshape(w.shape)
    del cols
    grad_b = grad_out.sum(axis=(0, 2, 3, 4)) if has_bias else None

    dcols = np.matmul(w.reshape(o, -1).T, g).reshape(n, c, kt, kh, kw, to, ho, wo)
    dxp = np.zeros(xp.shape, dtype=x.dtype)
    for a in range(kt):
        for b in range(kh):
            for d in range(kw):
                dxp[:, :, a:a + st * to:st, b:b + sh * ho:sh, d:d + sw * wo:sw] += dcols[:, :, a, b, d]
    grad_x = np.ascontiguousarray(dxp[:, :, pt:pt + t, ph:ph + h, pw:pw + wd])
    return (grad_x[0] if squeeze else grad_x), grad_w, grad_b


def conv3d(x, w, b=None, stride=1, pad=0):
    parents = (x, w) if b is None else (x, w, b)
    out, ctx = conv3d_forward(x.data, w.data, None if b is None else b.data, stride, pad)
    xd, wd, stride_, pad_, has_bias, squeeze = ctx

    # only the input activation is tape storage; the weight is a live parameter
    def bw(saved, g):
        (xs,) = saved
        gx, gw, gb = conv3d_backward((xs, wd, stride_, pad_, has_bias, squeeze), g)
        return (gx, gw) if gb is None else (gx, gw, gb)

    return make_result("conv3d", out, parents, (xd,), bw)


def leaky_relu(x, slope=0.01):
    x = as_tensor(x)
    pos = x.data > 0
    out = np.where(pos, x.data, slope * x.data)

    def bw(saved, g):
        (p,) = saved
        return (np.where(p, g, slope * g),)

    return make_result("leaky_relu", out, (x,), (pos,), bw)


def upsample2x(x):
    """Nearest-neighbour x2 over the last two (spatial) axes."""
    x = as_tensor(x)
    out = np.repeat(np.repeat(x.data, 2, axis=-2), 2, axis=-1)

    def bw(saved, g):
        s = g.shape
        return (g.reshape(s[:-2] + (s[-2] // 2, 2, s[-1] // 2, 2)).sum(axis=(-3, -1)),)

    return make_result("upsample2x", out, (x,), (), bw)


def concat_channels(xs):
    """Concatenate along the channel axis (axis -4) in argument order."""
    xs = [as_tensor(x) for x in xs]
    ref = xs[0].shape
    for x in xs[1:]:
        if x.ndim != len(ref) or x.shape[:-4] != ref[:-4] or x.shape[-3:] != ref[-3:]:
            raise DimensionError(f"cannot concatenate shapes {ref} and {x.shape} along channels")
    sizes = [x.shape[-4] for x in xs]
    out = np.concatenate([x.data for x in xs], axis=-4)
    bounds = np.cumsum([0] + sizes)

    def bw(saved, g):
        return tuple(g[..., lo:hi, :, :, :] for lo, hi in zip(bounds[:-1], bounds[1:]))

    return make_result("concat", out, xs, (), bw)


def slice_channels(x, start, stop):
    x = as_tensor(x)
    c = x.shape[-4]
    out = np.ascontiguousarray(x.data[..., start:stop, :, :, :])

    def bw(saved, g):
        full = np.zeros(g.shape[:-4] + (c,) + g.shape[-3:], dtype=g.dtype)
        full[..., start:stop, :, :, :] = g
        return (full,)

    return make_result("slice", out, (x,), (), bw)


def split_channels(x, n_first=None):
    c = x.shape[-4]
    n_first = c // 2 if n_first is None else n_first
    return slice_channels(x, 0, n_first), slice_channels(x, n_first, c)


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise DimensionError(f"add: shape mismatch {a.shape} vs {b.shape}")
    return make_result("add", a.data + b.data, (a, b), (), lambda s, g: (g, g))


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise DimensionError(f"sub: shape mismatch {a.shape} vs {b.shape}")
    return make_result("sub", a.data - b.data, (a, b), (), lambda s, g: (g, -g))


def scale(a, c):
    a = as_tensor(a)
    return make_result("scale", a.data * c, (a,), (), lambda s, g: (g * c,))


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise DimensionError(f"mul: shape mismatch {a.shape} vs {b.shape}")

    def bw(saved, g):
        ad, bd = saved
        return g * bd, g * ad

    return make_result("mul", a.data * b.data, (a, b), (a.data, b.data), bw)


def mse(pred, target):
    """Mean squared error over every element; ``target`` is treated as constant."""
    pred = as_tensor(pred)
    t = target.data if isinstance(target, Tensor) else np.asarray(target)
    if pred.shape != t.shape:
        raise DimensionError(f"mse: shape mismatch {pred.shape} vs {t.shape}")
    diff = pred.data - t
    out = np.asarray(np.mean(diff * diff), dtype=pred.dtype)

    def bw(saved, g):
        (d,) = saved
        return (g * (2.0 / d.size) * d,)

    return make_result("mse", out, (pred,), (diff,), bw)


def total(x):
    x = as_tensor(x)
    shape = x.shape
    return make_result("sum", np.asarray(x.data.sum()), (x,), (),
                       lambda s, g: (np.broadcast_to(g, shape).copy(),))


def project_measurement(v, y, m, gain):
    """Batched GAP projection on network layout.

    ``v``: Tensor [N, 1, T, W, H]; ``y``: [N, W, H]; ``m``: [N, T, W, H];
    ``gain``: [N, W, H] holding 1/q on sensed pixels and 0 elsewhere.
    The map is affine in ``v`` with a symmetric linear part, so the backward
    is the same projection applied to the gradient with a zero measurement.
    """
    v = as_tensor(v)
    vd = v.data[:, 0]
    r = (y - np.sum(m * vd, axis=1)) * gain
    out = (vd + m * r[:, None])[:, None]

    def bw(saved, g):
        gd = g[:, 0]
        rg = np.sum(m * gd, axis=1) * gain
        return ((gd - m * rg[:, None])[:, None],)

    return make_result("gap_project", out.astype(v.dtype, copy=False), (v,), (), bw)


def mosaic_rggb(v, onehot):
    """Bayer-sample a [N, 3, T, W, H] tensor into [N, 1, T, W, H].

    ``onehot`` is [3, W, H] with a single 1 per pixel selecting the filter colour.
    """
    v = as_tensor(v)
    sel = onehot[None, :, None]
    out = np.sum(v.data * sel, axis=1, keepdims=True)

    def bw(saved, g):
        return (g * sel,)

    return make_result("mosaic", out.astype(v.dtype, copy=False), (v,), (), bw)
