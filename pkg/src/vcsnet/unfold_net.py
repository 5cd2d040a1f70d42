"""Two-stage deep unfolding network with invertible blocks.

Each stage runs a GAP projection and then a fully convolutional 3-D network:
conv stem, one strided encoder conv, a chain of invertible blocks, a nearest
upsample plus conv decoder and a conv head.  Grayscale stages see the
projected cube concatenated with the reference measurement frames; color
stages see the projected Bayer cube, and their RGB output is re-mosaicked
before the next stage's projection.
"""
from dataclasses import asdict, dataclass
from typing import Literal

import numpy as np

from . import kernels as K
from ._validation import check_even, check_mask, check_measurement
from .exceptions import DimensionError
from .kernels import Tensor
from .kernels.reversible import block_forward, block_inverse
from .projection import EPS
from .sensing import bayer_channel_index


@dataclass
class ModelConfig:
    stages: int = 2
    channels: int = 16
    blocks: int = 4
    mode: Literal["gray", "color"] = "gray"
    memory_free: bool = True
    slope: float = 0.01
    seed: int = 0
    dtype: str = "float32"

    def __post_init__(self):
        if self.stages < 1:
            raise ValueError("stages must be >= 1")
        if self.channels < 1 or self.blocks < 0:
            raise ValueError("channels must be >= 1 and blocks >= 0")
        if self.mode not in ("gray", "color"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.dtype not in ("float32", "float64"):
            raise ValueError(f"unsupported dtype {self.dtype!r}")


class Conv3d:
    def __init__(self, c_in, c_out, kernel=3, stride=1, rng=None, dtype=np.float32):
        rng = np.random.default_rng(rng)
        fan_in = c_in * kernel ** 3
        bound = np.sqrt(6.0 / fan_in)
        w = rng.uniform(-bound, bound, size=(c_out, c_in, kernel, kernel, kernel))
        self.weight = Tensor(w.astype(dtype), requires_grad=True)
        self.bias = Tensor(np.zeros(c_out, dtype=dtype), requires_grad=True)
        self.stride = stride
        self.pad = kernel // 2

    def __call__(self, x):
        return K.conv3d(x, self.weight, self.bias, self.stride, self.pad)

    def named_parameters(self, prefix=""):
        return [(prefix + "weight", self.weight), (prefix + "bias", self.bias)]

    def zero_(self):
        self.weight.data[...] = 0
        self.bias.data[...] = 0


class SubNet:
    """conv -> leaky ReLU -> conv, channel count preserved (the F / G of a block)."""

    def __init__(self, c, slope=0.01, rng=None, dtype=np.float32):
        self.conv1 = Conv3d(c, c, rng=rng, dtype=dtype)
        self.conv2 = Conv3d(c, c, rng=rng, dtype=dtype)
        self.slope = slope

    def __call__(self, x):
        return self.conv2(K.leaky_relu(self.conv1(x), self.slope))

    def named_parameters(self, prefix=""):
        return self.conv1.named_parameters(prefix + "conv1.") + self.conv2.named_parameters(prefix + "conv2.")


class InvertibleBlock:
    """Additive coupling on a feature map with ``channels`` (even) channels."""

    def __init__(self, channels, slope=0.01, rng=None, dtype=np.float32):
        if channels % 2:
            raise DimensionError(f"invertible block needs an even channel count, got {channels}")
        half = channels // 2
        self.F = SubNet(half, slope, rng, dtype)
        self.G = SubNet(half, slope, rng, dtype)

    def named_parameters(self, prefix=""):
        return self.F.named_parameters(prefix + "F.") + self.G.named_parameters(prefix + "G.")

    def parameters(self):
        return [p for _, p in self.named_parameters()]


def invertible_forward(block, s1, s2):
    """(s1, s2) -> (s1 + F(s2), s2 + G(s1'))."""
    return block_forward(block, K.tensor.as_tensor(s1), K.tensor.as_tensor(s2))


def invertible_inverse(block, s1p, s2p):
    """Exact inverse of ``invertible_forward``."""
    return block_inverse(block, K.tensor.as_tensor(s1p), K.tensor.as_tensor(s2p))


class StageNet:
    def __init__(self, c_in, c_out, channels=16, blocks=4, slope=0.01, memory_free=True,
                 rng=None, dtype=np.float32):
        rng = np.random.default_rng(rng)
        c = channels
        self.c_in, self.c_out = c_in, c_out
        self.slope = slope
        self.memory_free = memory_free
        self.stem = Conv3d(c_in, c, rng=rng, dtype=dtype)
        self.down = Conv3d(c, 2 * c, stride=(1, 2, 2), rng=rng, dtype=dtype)
        self.blocks = [InvertibleBlock(2 * c, slope, rng, dtype) for _ in range(blocks)]
        self.up = Conv3d(2 * c, c, rng=rng, dtype=dtype)
        self.head = Conv3d(c, c_out, rng=rng, dtype=dtype)

    def __call__(self, x):
        if x.shape[-4] != self.c_in:
            raise DimensionError(f"stage expects {self.c_in} input channels, got {x.shape[-4]}")
        if x.shape[-1] % 2 or x.shape[-2] % 2:
            raise DimensionError(f"spatial dims must be even, got {x.shape[-2:]}")
        h = K.leaky_relu(self.stem(x), self.slope)
        h = K.leaky_relu(self.down(h), self.slope)
        if self.blocks:
            chain = K.reversible_chain if self.memory_free else K.stored_chain
            h = chain(self.blocks, h)
        h = K.leaky_relu(self.up(K.upsample2x(h)), self.slope)
        return self.head(h)

    def named_parameters(self, prefix=""):
        out = self.stem.named_parameters(prefix + "stem.") + self.down.named_parameters(prefix + "down.")
        for i, b in enumerate(self.blocks):
            out += b.named_parameters(f"{prefix}blocks.{i}.")
        return out + self.up.named_parameters(prefix + "up.") + self.head.named_parameters(prefix + "head.")

    def parameters(self):
        return [p for _, p in self.named_parameters()]


class UnfoldModel:
    """J independently parameterized stages sharing one architecture."""

    def __init__(self, config=None, **kwargs):
        self.config = config or ModelConfig(**kwargs)
        cfg = self.config
        rng = np.random.default_rng(cfg.seed)
        dtype = np.dtype(cfg.dtype)
        c_in, c_out = (2, 1) if cfg.mode == "gray" else (1, 3)
        self.stages = [StageNet(c_in, c_out, cfg.channels, cfg.blocks, cfg.slope, cfg.memory_free,
                                rng, dtype) for _ in range(cfg.stages)]

    @property
    def mode(self):
        return self.config.mode

    @property
    def dtype(self):
        return np.dtype(self.config.dtype)

    def named_parameters(self):
        out = []
        for j, s in enumerate(self.stages):
            out += s.named_parameters(f"stage{j}.")
        return out

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def state_dict(self):
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state):
        params = dict(self.named_parameters())
        missing = set(params) - set(state)
        extra = set(state) - set(params)
        if missing or extra:
            raise KeyError(f"state mismatch: missing {sorted(missing)}, unexpected {sorted(extra)}")
        for name, p in params.items():
            arr = np.asarray(state[name])
            if arr.shape != p.data.shape:
                raise DimensionError(f"{name}: expected shape {p.data.shape}, got {arr.shape}")
            p.data[...] = arr

    def hyperparameters(self):
        return asdict(self.config)

    def set_memory_free(self, flag):
        self.config.memory_free = flag
        for s in self.stages:
            s.memory_free = flag


# ---------------------------------------------------------------------------
# batched forward on network layout


def cubes_to_net(x):
    """(N, W, H, T) -> (N, 1, T, W, H); (N, W, H, T, 3) -> (N, 3, T, W, H)."""
    if x.ndim == 4:
        return np.ascontiguousarray(x.transpose(0, 3, 1, 2)[:, None])
    return np.ascontiguousarray(x.transpose(0, 4, 3, 1, 2))


def net_to_cubes(v):
    """Inverse of ``cubes_to_net``; single-channel output drops the channel axis."""
    if v.shape[1] == 1:
        return np.ascontiguousarray(v[:, 0].transpose(0, 2, 3, 1))
    return np.ascontiguousarray(v.transpose(0, 3, 4, 2, 1))


class SensingBatch:
    """Per-sample measurement quantities in network layout, computed once."""

    def __init__(self, y, m, dtype=np.float32):
        y = np.asarray(y, dtype=np.float64)
        m = np.asarray(m, dtype=np.float64)
        if y.ndim == 2:
            y = y[None]
        if m.ndim == 3:
            m = np.broadcast_to(m[None], (y.shape[0],) + m.shape)
        if m.shape[:3] != y.shape:
            raise DimensionError(f"measurement shape {y.shape} does not match mask shape {m.shape}")
        mt = m.transpose(0, 3, 1, 2)  # (N, T, W, H)
        coverage = mt.sum(axis=1)
        q = np.sum(mt * mt, axis=1)
        ybar = np.where(coverage > EPS, y / np.where(coverage > EPS, coverage, 1.0), 0.0)
        self.y = y.astype(dtype)
        self.m = np.ascontiguousarray(mt, dtype=dtype)
        self.gain = np.where(q > EPS, 1.0 / np.where(q > EPS, q, 1.0), 0.0).astype(dtype)
        self.rmf = (ybar[:, None] * mt)[:, None].astype(dtype)  # (N, 1, T, W, H)
        self.shape = m.shape[1:]

    def project(self, v):
        return K.project_measurement(v, self.y, self.m, self.gain)


def _onehot_rggb(w, h, dtype):
    idx = bayer_channel_index(w, h)
    return np.stack([(idx == c) for c in range(3)]).astype(dtype)


def forward_stages(model, batch, upto=None):
    """Run the first ``upto`` stages (default all) on a ``SensingBatch``.

    Returns the list of stage outputs as Tensors.
    """
    stages = model.stages if upto is None else model.stages[:upto]
    w, h, _ = batch.shape
    if w % 2 or h % 2:
        raise DimensionError(f"frame dimensions must be even, got {w}x{h}")
    outs = []
    rmf = Tensor(batch.rmf)
    v = rmf
    if model.mode == "gray":
        for stage in stages:
            x = batch.project(v)
            v = stage(K.concat_channels([x, rmf]))
            outs.append(v)
    else:
        onehot = _onehot_rggb(w, h, batch.rmf.dtype)
        for j, stage in enumerate(stages):
            mosaic = v if j == 0 else K.mosaic_rggb(v, onehot)
            v = stage(batch.project(mosaic))
            outs.append(v)
    return outs


def _reconstruct(model, y, m, expect):
    if model.mode != expect:
        raise ValueError(f"model mode is {model.mode!r}, expected {expect!r}")
    m = check_mask(m)
    y = check_measurement(y, m)
    check_even(m.shape)
    with K.no_grad():
        outs = forward_stages(model, SensingBatch(y, m, model.dtype))
    stages = [net_to_cubes(o.data)[0].astype(np.float64) for o in outs]
    return np.clip(stages[-1], 0.0, 1.0), stages


def reconstruct_gray(model, y, m):
    """Return ``(clip(v_J, 0, 1), [v_1, ..., v_J])`` for a grayscale measurement."""
    return _reconstruct(model, y, m, "gray")


def reconstruct_color(model, y, m):
    """Return ``(clip(v_J, 0, 1), [v_1, ..., v_J])`` with RGB cubes (W, H, T, 3)."""
    return _reconstruct(model, y, m, "color")


def reconstruct(model, y, m):
    return _reconstruct(model, y, m, model.mode)


def stage_forward_gray(stage, v_prev, y, m, xr):
    """One grayscale stage on (W, H, T) cubes: project, fuse with the RMF, denoise."""
    m = check_mask(m)
    y = check_measurement(y, m)
    v_prev = np.asarray(v_prev, dtype=np.float64)
    if v_prev.shape != m.shape:
        raise DimensionError(f"estimate shape {v_prev.shape} does not match mask shape {m.shape}")
    dtype = stage.stem.weight.dtype
    batch = SensingBatch(y, m, dtype)
    rmf = cubes_to_net(np.asarray(xr.rmf)[None]).astype(dtype)
    with K.no_grad():
        x = batch.project(Tensor(cubes_to_net(v_prev[None]).astype(dtype)))
        v = stage(K.concat_channels([x, Tensor(rmf)]))
    return net_to_cubes(v.data)[0].astype(np.float64)
