"""Synthetic scenes, losses, learning-rate schedule and stage-by-stage training."""
import csv
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Literal

import numpy as np

from . import kernels as K
from .exceptions import DimensionError, NumericError
from .kernels import Tensor
from .sensing import bayer_mosaic, generate_masks
from .unfold_net import SensingBatch, UnfoldModel, cubes_to_net, forward_stages

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    epochs_per_phase: tuple = (15, 15, 10)
    batch_size: int = 4
    lr0: float = 5e-5
    lr_warm_epochs: int = 8
    lr_decay: float = 0.5
    lr_decay_every: int = 5
    seed: int = 0
    samples: int = 200
    frame_dims: tuple = (32, 32, 4)
    mode: Literal["gray", "color"] = "gray"
    resample_masks_per_batch: bool = False
    mask_seed: int = 1
    mask_kind: Literal["binary", "continuous"] = "binary"
    noise_sigma: float = 0.0
    clip_norm: float = 5.0

    def __post_init__(self):
        self.epochs_per_phase = tuple(int(e) for e in self.epochs_per_phase)
        self.frame_dims = tuple(int(d) for d in self.frame_dims)
        if len(self.epochs_per_phase) != 3 or min(self.epochs_per_phase) < 0:
            raise ValueError("epochs_per_phase must be three non-negative integers")
        if len(self.frame_dims) != 3 or min(self.frame_dims) < 1:
            raise ValueError("frame_dims must be three positive integers (W, H, T)")
        if self.batch_size < 1 or self.samples < 1:
            raise ValueError("batch_size and samples must be >= 1")
        if self.mode not in ("gray", "color"):
            raise ValueError(f"unknown mode {self.mode!r}")

    def lr(self, epoch):
        """Learning rate at ``epoch`` (counted from 0 within a phase)."""
        if epoch < self.lr_warm_epochs:
            return self.lr0
        return self.lr0 * self.lr_decay ** ((epoch - self.lr_warm_epochs) // self.lr_decay_every + 1)


# ---------------------------------------------------------------------------
# synthetic data


def _smooth_field(rng, w, h):
    ii, jj = np.meshgrid(np.linspace(0, 1, w), np.linspace(0, 1, h), indexing="ij")
    f = rng.uniform(-0.5, 0.5) * ii + rng.uniform(-0.5, 0.5) * jj
    for _ in range(3):
        fx, fy = rng.uniform(0.5, 3.0, size=2)
        ph = rng.uniform(0, 2 * np.pi)
        f += rng.uniform(0.05, 0.25) * np.sin(2 * np.pi * (fx * ii + fy * jj) + ph)
    f -= f.min()
    f /= max(f.max(), 1e-9)
    lo = rng.uniform(0.05, 0.35)
    return lo + f * rng.uniform(0.2, 0.5)


def _texture(rng, kind):
    period = rng.integers(3, 7)
    amp = rng.uniform(0.05, 0.2)
    if kind == 0:
        return lambda u, v: amp * ((u // period) % 2)
    if kind == 1:
        return lambda u, v: amp * (((u // period) + (v // period)) % 2)
    return lambda u, v: 0.0 * u


def synth_scene(rng, w, h, t, color=False):
    """Textured rectangles and discs moving by whole pixels over a static background."""
    channels = 3 if color else 1
    if color:
        bg = np.stack([_smooth_field(rng, w, h) for _ in range(3)], axis=-1)
    else:
        bg = _smooth_field(rng, w, h)[..., None]
    frames = np.repeat(bg[:, :, None, :], t, axis=2)
    ii, jj = np.meshgrid(np.arange(w), np.arange(h), indexing="ij")
    n_obj = int(rng.integers(1, 4))
    for k in range(n_obj):
        disc = rng.random() < 0.5
        size = rng.integers(max(3, min(w, h) // 8), max(4, min(w, h) // 3) + 1, size=2)
        vel = rng.integers(-2, 3, size=2)
        if k == 0 and not vel.any():
            vel[rng.integers(0, 2)] = rng.choice([-1, 1]) * rng.integers(1, 3)
        start = np.array([rng.uniform(0.2, 0.8) * w, rng.uniform(0.2, 0.8) * h]).astype(int)
        base = rng.uniform(0.3, 1.0, size=channels) if color else np.array([rng.uniform(0.4, 1.0)])
        tex = _texture(rng, int(rng.integers(0, 3)))
        for f in range(t):
            ci, cj = start + f * vel
            u, v = ii - ci, jj - cj
            if disc:
                inside = (u / (size[0] / 2)) ** 2 + (v / (size[0] / 2)) ** 2 <= 1.0
            else:
                inside = (np.abs(u) <= size[0] // 2) & (np.abs(v) <= size[1] // 2)
            val = base[None, :] - tex(u[inside], v[inside])[:, None]
            frames[inside, f, :] = val
    frames = np.clip(frames, 0.0, 1.0)
    return frames if color else frames[..., 0]


def augment(x, rng):
    """Random rotation by a multiple of 90 degrees plus an optional horizontal flip."""
    square = x.shape[0] == x.shape[1]
    k = int(rng.integers(0, 4)) if square else 2 * int(rng.integers(0, 2))
    out = np.rot90(x, k, axes=(0, 1))
    if rng.random() < 0.5:
        out = out[:, ::-1]
    return np.ascontiguousarray(out)


def synth_dataset(cfg, count=None, seed=None):
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    w, h, t = cfg.frame_dims
    n = cfg.samples if count is None else count
    color = cfg.mode == "color"
    return [augment(synth_scene(rng, w, h, t, color), rng) for _ in range(n)]


# ---------------------------------------------------------------------------
# losses


def mse_loss(pred, truth):
    """Mean of squared errors over channels, batch, time and space."""
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise DimensionError(f"prediction shape {pred.shape} does not match truth {truth.shape}")
    return float(np.mean((pred - truth) ** 2))


def stage_wise_loss(v1, v2, truth):
    return 0.5 * mse_loss(v1, truth) + mse_loss(v2, truth)


def stage_weights(n_stages, phase=None):
    """Loss weight per stage output.  Phase 1 / 2 of the two-stage schedule
    train a single stage; otherwise all but the last stage get 0.5."""
    if phase == 1:
        return [1.0] + [0.0] * (n_stages - 1)
    if phase == 2:
        return [0.0] * (n_stages - 1) + [1.0]
    return [0.5] * (n_stages - 1) + [1.0]


def weighted_stage_loss(outs, truth, weights):
    loss = None
    for o, wgt in zip(outs, weights):
        if wgt == 0:
            continue
        term = K.mse(o, truth)
        term = term if wgt == 1.0 else K.scale(term, wgt)
        loss = term if loss is None else K.add(loss, term)
    return loss


# ---------------------------------------------------------------------------
# training


@dataclass
class TrainResult:
    model: UnfoldModel
    log: list = field(default_factory=list)
    phase_initial_loss: dict = field(default_factory=dict)
    mask: np.ndarray = None
    seconds: float = 0.0


def _phases(model, cfg):
    e1, e2, e3 = cfg.epochs_per_phase
    n = len(model.stages)
    if n != 2:
        return [(0, list(range(n)), sum(cfg.epochs_per_phase))]
    return [(1, [0], e1), (2, [1], e2), (3, [0, 1], e3)]


def _measure_all(scenes, mask, cfg, rng):
    xs = np.stack(scenes)
    gray = xs if cfg.mode == "gray" else np.stack([bayer_mosaic(x) for x in scenes])
    ys = np.sum(gray * mask[None], axis=3)
    if cfg.noise_sigma > 0:
        ys = ys + rng.normal(0, cfg.noise_sigma, size=ys.shape)
    return xs, ys


def _batch_loss(model, ys, truth_net, masks, weights, upto):
    batch = SensingBatch(ys, masks, model.dtype)
    outs = forward_stages(model, batch, upto=upto)
    return weighted_stage_loss(outs, truth_net, weights)


def _dataset_loss(model, xs, ys, mask, weights, upto, bs):
    total, n = 0.0, 0
    with K.no_grad():
        for lo in range(0, len(xs), bs):
            sl = slice(lo, lo + bs)
            truth = cubes_to_net(xs[sl]).astype(model.dtype)
            loss = _batch_loss(model, ys[sl], truth, mask, weights, upto)
            total += float(loss.data) * len(truth)
            n += len(truth)
    return total / n


def train(model, cfg, scenes=None, mask=None, log_path=None, checkpoint_dir=None):
    """Stage-by-stage training with a fresh Adam and LR schedule per phase.

    Two-stage models run three phases: stage 1 alone, stage 2 with stage 1
    frozen, then both stages on the stage-wise loss.  Other depths train end to
    end on the weighted per-stage loss.
    """
    from .io import save_checkpoint

    t0 = time.perf_counter()
    if model.mode != cfg.mode:
        raise ValueError(f"model mode {model.mode!r} differs from config mode {cfg.mode!r}")
    rng = np.random.default_rng(cfg.seed + 7919)
    scenes = synth_dataset(cfg) if scenes is None else scenes
    w, h, t = cfg.frame_dims
    mask = generate_masks(w, h, t, cfg.mask_seed, cfg.mask_kind).data if mask is None else np.asarray(mask)
    xs, ys = _measure_all(scenes, mask, cfg, rng)
    result = TrainResult(model, mask=mask)
    all_params = model.named_parameters()
    stage_params = [s.parameters() for s in model.stages]
    n = len(xs)
    global_epoch = 0
    ckpt_dir = Path(checkpoint_dir) if checkpoint_dir else None

    for phase, trainable, epochs in _phases(model, cfg):
        for _, p in all_params:
            p.requires_grad = False
            p.grad = None
        params = [p for j in trainable for p in stage_params[j]]
        for p in params:
            p.requires_grad = True
        upto = max(trainable) + 1
        weights = stage_weights(upto, phase if phase in (1, 2) else None)
        opt = K.Adam(params, lr=cfg.lr0, clip_norm=cfg.clip_norm)
        result.phase_initial_loss[phase] = _dataset_loss(model, xs, ys, mask, weights, upto, cfg.batch_size)
        for epoch in range(epochs):
            opt.lr = cfg.lr(epoch)
            order = rng.permutation(n)
            running, seen = 0.0, 0
            for lo in range(0, n, cfg.batch_size):
                idx = order[lo:lo + cfg.batch_size]
                truth = cubes_to_net(xs[idx]).astype(model.dtype)
                if cfg.resample_masks_per_batch:
                    bmask = generate_masks(w, h, t, int(rng.integers(2 ** 31)), cfg.mask_kind).data
                    gray = xs[idx] if cfg.mode == "gray" else np.stack([bayer_mosaic(x) for x in xs[idx]])
                    by = np.sum(gray * bmask[None], axis=3)
                else:
                    bmask, by = mask, ys[idx]
                opt.zero_grad()
                loss = _batch_loss(model, by, truth, bmask, weights, upto)
                value = float(loss.data)
                if not np.isfinite(value):
                    if ckpt_dir is not None:
                        save_checkpoint(ckpt_dir / "last_finite.vcub", model)
                    raise NumericError(f"non-finite loss in phase {phase}, epoch {epoch}")
                loss.backward()
                opt.step()
                running += value * len(idx)
                seen += len(idx)
            row = {"epoch": global_epoch, "phase": phase, "lr": opt.lr, "loss": running / seen}
            result.log.append(row)
            log.info("phase %d epoch %d lr %.3g loss %.6g", phase, epoch, opt.lr, row["loss"])
            global_epoch += 1
        if ckpt_dir is not None:
            save_checkpoint(ckpt_dir / f"phase{phase}.vcub", model)
    for p in model.parameters():
        p.requires_grad = True
        p.grad = None
    if log_path is not None:
        write_loss_log(log_path, result.log)
    result.seconds = time.perf_counter() - t0
    return result


def write_loss_log(path, rows):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["epoch", "phase", "lr", "loss"])
        for r in rows:
            wr.writerow([r["epoch"], r["phase"], repr(float(r["lr"])), repr(float(r["loss"]))])


def config_dict(cfg):
    d = asdict(cfg)
    d["epochs_per_phase"] = list(cfg.epochs_per_phase)
    d["frame_dims"] = list(cfg.frame_dims)
    return d
