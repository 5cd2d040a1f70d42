"""GAP-TV: alternate the GAP projection with per-frame 2-D TV denoising."""
from dataclasses import dataclass
from typing import Literal

import numpy as np

from ._validation import check_gray_video, check_mask, check_measurement
from .projection import gap_project
from .sensing import reference_frames


@dataclass
class GapTvConfig:
    iters: int = 60
    tv_weight: float = 0.07
    tv_inner_iters: int = 5
    tv_mode: Literal["anisotropic", "isotropic"] = "anisotropic"

    def __post_init__(self):
        if self.iters < 1:
            raise ValueError("iters must be >= 1")
        if not self.tv_weight > 0:
            raise ValueError("tv_weight must be > 0")
        if self.tv_inner_iters < 1:
            raise ValueError("tv_inner_iters must be >= 1")
        if self.tv_mode not in ("anisotropic", "isotropic"):
            raise ValueError(f"unknown tv_mode {self.tv_mode!r}")


def _grad(u):
    """Forward differences with Neumann boundary over axes 0 and 1."""
    g = np.zeros((2,) + u.shape, dtype=u.dtype)
    g[0, :-1] = u[1:] - u[:-1]
    g[1, :, :-1] = u[:, 1:] - u[:, :-1]
    return g


def _div(p):
    """Negative adjoint of _grad."""
    d = np.zeros(p.shape[1:], dtype=p.dtype)
    d[:-1] += p[0, :-1]
    d[1:] -= p[0, :-1]
    d[:, :-1] += p[1, :, :-1]
    d[:, 1:] -= p[1, :, :-1]
    return d


def total_variation(u, mode="anisotropic"):
    """Per-frame TV summed over frames (axis 2 and beyond are frame axes)."""
    g = _grad(u)
    if mode == "anisotropic":
        return float(np.abs(g).sum())
    return float(np.sqrt((g ** 2).sum(axis=0)).sum())


def tv_objective(z, x, weight, mode="anisotropic"):
    return 0.5 * float(np.sum((z - x) ** 2)) + weight * total_variation(z, mode)


def _project_dual(p, mode):
    if mode == "anisotropic":
        return np.clip(p, -1.0, 1.0)
    norm = np.sqrt((p ** 2).sum(axis=0, keepdims=True))
    return p / np.maximum(norm, 1.0)


def _tv_frame(x, weight, n_iter, mode):
    # dual projected gradient: z = x + weight * div(p), step 1/8 on the dual
    p = np.zeros((2,) + x.shape, dtype=x.dtype)
    for _ in range(n_iter):
        z = x + weight * _div(p)
        p = _project_dual(p + _grad(z) / (8.0 * weight), mode)
    z = x + weight * _div(p)
    # monotone safeguard: never return something worse than the input
    if tv_objective(z, x, weight, mode) > tv_objective(x, x, weight, mode):
        return x.copy()
    return z


def tv_denoise(x, cfg=None):
    """Denoise every frame of a (W, H, T) cube independently."""
    cfg = cfg or GapTvConfig()
    x = check_gray_video(x)
    out = np.empty_like(x)
    for t in range(x.shape[2]):
        out[:, :, t] = _tv_frame(x[:, :, t], cfg.tv_weight, cfg.tv_inner_iters, cfg.tv_mode)
    return out


def gap_tv_reconstruct(y, m, cfg=None, callback=None):
    """Reconstruct a grayscale cube from one snapshot.

    ``callback(k, x)`` is called with each post-projection iterate.
    """
    cfg = cfg or GapTvConfig()
    m = check_mask(m)
    y = check_measurement(y, m)
    v = reference_frames(y, m).rmf
    for k in range(cfg.iters):
        x = gap_project(v, y, m)
        if callback is not None:
            callback(k, x)
        v = tv_denoise(x, cfg)
    return np.clip(v, 0.0, 1.0)
