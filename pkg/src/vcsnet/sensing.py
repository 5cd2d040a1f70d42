"""Mask generation and the snapshot forward model (grayscale and Bayer RGGB).

Cubes are indexed ``(W, H, T)`` for grayscale video and masks and
``(W, H, T, 3)`` for color video.  Axis 0 is the "row" axis for the Bayer
layout and for vectorization.
"""
from dataclasses import dataclass
from typing import Literal

import numpy as np

from ._validation import (as_array, check_even, check_gray_video, check_mask,
                          check_measurement, check_rgb_video)
from .exceptions import DimensionError

EPS = 1e-6


@dataclass(frozen=True)
class MaskCube:
    data: np.ndarray
    kind: Literal["binary", "continuous"] = "binary"

    def __array__(self, dtype=None, copy=None):
        return self.data if dtype is None else self.data.astype(dtype)

    @property
    def shape(self):
        return self.data.shape


@dataclass(frozen=True)
class Measurement:
    data: np.ndarray
    noise_sigma: float = 0.0

    def __array__(self, dtype=None, copy=None):
        return self.data if dtype is None else self.data.astype(dtype)

    @property
    def shape(self):
        return self.data.shape


@dataclass(frozen=True)
class RefFrames:
    normalized: np.ndarray
    rmf: np.ndarray


def generate_masks(w, h, t, seed=0, kind="binary"):
    """Draw an i.i.d. random mask cube: Bernoulli(0.5) or Uniform[0, 1]."""
    for name, v in (("w", w), ("h", h), ("t", t)):
        if int(v) != v or v < 1:
            raise DimensionError(f"mask dimension {name} must be a positive integer, got {v}")
    rng = np.random.default_rng(seed)
    if kind == "binary":
        data = (rng.random((w, h, t)) < 0.5).astype(np.float64)
    elif kind == "continuous":
        data = rng.random((w, h, t))
    else:
        raise ValueError(f"unknown mask kind {kind!r}")
    return MaskCube(data, kind)


def forward_measure(x, m, noise_sigma=0.0, rng=None):
    """Y = sum_t X[..., t] * M[..., t] + N."""
    m = check_mask(m)
    x = check_gray_video(x, m)
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be non-negative")
    y = np.sum(x * m, axis=2)
    if noise_sigma > 0:
        rng = np.random.default_rng(rng)
        y = y + rng.normal(0.0, noise_sigma, size=y.shape)
    return Measurement(y, float(noise_sigma))


def normalized_measurement(y, m):
    """Y divided by the summed mask; pixels never sensed come out as 0."""
    m = check_mask(m)
    y = check_measurement(y, m)
    coverage = m.sum(axis=2)
    out = np.zeros_like(y)
    sensed = coverage > EPS
    out[sensed] = y[sensed] / coverage[sensed]
    return out


def reference_frames(y, m):
    m = check_mask(m)
    ybar = normalized_measurement(y, m)
    return RefFrames(ybar, ybar[:, :, None] * m)


def bayer_mosaic(x):
    """Sample an RGB cube through an RGGB filter anchored at (0, 0) = R."""
    x = check_rgb_video(x)
    check_even(x.shape)
    out = np.empty(x.shape[:-1], dtype=x.dtype)
    out[0::2, 0::2] = x[0::2, 0::2, ..., 0]
    out[0::2, 1::2] = x[0::2, 1::2, ..., 1]
    out[1::2, 0::2] = x[1::2, 0::2, ..., 1]
    out[1::2, 1::2] = x[1::2, 1::2, ..., 2]
    return out


def bayer_channel_index(w, h):
    """Per-pixel RGB channel index of the RGGB layout, shape (W, H)."""
    idx = np.empty((w, h), dtype=np.intp)
    idx[0::2, 0::2] = 0
    idx[0::2, 1::2] = 1
    idx[1::2, 0::2] = 1
    idx[1::2, 1::2] = 2
    return idx


def forward_measure_color(x, m, noise_sigma=0.0, rng=None):
    m = check_mask(m)
    x = check_rgb_video(x, m)
    check_even(x.shape)
    return forward_measure(bayer_mosaic(x), m, noise_sigma, rng)


def as_mask(m):
    """Accept a MaskCube or a bare array."""
    if isinstance(m, MaskCube):
        return m
    data = as_array(m)
    kind = "binary" if np.all((data == 0) | (data == 1)) else "continuous"
    return MaskCube(data, kind)
