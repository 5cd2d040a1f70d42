"""PSNR / SSIM and the mask- and scale-flexibility evaluation harness."""
import csv
import time
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ._validation import check_mask, check_measurement
from .exceptions import DimensionError
from .sensing import forward_measure, forward_measure_color, generate_masks, reference_frames
from .unfold_net import reconstruct

SSIM_WIN = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def psnr(x, ref, peak=1.0):
    """PSNR in dB with the MSE taken over the whole cube; identical inputs give inf."""
    x = np.asarray(x, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    if x.shape != ref.shape:
        raise DimensionError(f"psnr: shape mismatch {x.shape} vs {ref.shape}")
    err = np.mean((x - ref) ** 2)
    if err == 0:
        return float("inf")
    return float(10.0 * np.log10(peak * peak / err))


def _gauss_1d(size=SSIM_WIN, sigma=SSIM_SIGMA):
    r = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(r ** 2) / (2.0 * sigma ** 2))
    return g / g.sum()


def _filter_valid(img, g):
    a = sliding_window_view(img, g.size, axis=0) @ g
    return sliding_window_view(a, g.size, axis=1) @ g


def ssim(x, ref, data_range=1.0):
    """Mean SSIM of one frame over all window positions fully inside the frame."""
    x = np.asarray(x, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    if x.shape != ref.shape or x.ndim != 2:
        raise DimensionError(f"ssim expects two equal 2-D frames, got {x.shape} and {ref.shape}")
    if min(x.shape) < SSIM_WIN:
        raise DimensionError(f"frame {x.shape} smaller than the {SSIM_WIN}x{SSIM_WIN} window")
    g = _gauss_1d()
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    mx, my = _filter_valid(x, g), _filter_valid(ref, g)
    sxx = _filter_valid(x * x, g) - mx * mx
    syy = _filter_valid(ref * ref, g) - my * my
    sxy = _filter_valid(x * ref, g) - mx * my
    num = (2 * mx * my + c1) * (2 * sxy + c2)
    den = (mx * mx + my * my + c1) * (sxx + syy + c2)
    return float(np.mean(num / den))


def ssim_cube(x, ref):
    """SSIM averaged over frames (and channels for color cubes)."""
    x = np.asarray(x)
    ref = np.asarray(ref)
    if x.shape != ref.shape:
        raise DimensionError(f"ssim: shape mismatch {x.shape} vs {ref.shape}")
    if x.ndim == 2:
        return ssim(x, ref)
    frames = x.reshape(x.shape[:2] + (-1,))
    refs = ref.reshape(ref.shape[:2] + (-1,))
    return float(np.mean([ssim(frames[:, :, k], refs[:, :, k]) for k in range(frames.shape[2])]))


# ---------------------------------------------------------------------------
# evaluation harness


@dataclass
class EvalReport:
    rows: list = field(default_factory=list)

    def add(self, condition, scene, psnr_db, ssim_val, seconds):
        self.rows.append({"condition": condition, "scene": scene, "psnr": psnr_db,
                          "ssim": ssim_val, "seconds": seconds})

    def conditions(self):
        seen = []
        for r in self.rows:
            if r["condition"] not in seen:
                seen.append(r["condition"])
        return seen

    def average(self, condition, key="psnr"):
        vals = [r[key] for r in self.rows if r["condition"] == condition]
        return float(np.mean(vals))

    def summary(self):
        return {c: {k: self.average(c, k) for k in ("psnr", "ssim", "seconds")} for c in self.conditions()}

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["condition", "scene", "psnr", "ssim", "seconds"])
            for r in self.rows:
                wr.writerow([r["condition"], r["scene"], f"{r['psnr']:.6f}", f"{r['ssim']:.6f}",
                             f"{r['seconds']:.6f}"])
            for c in self.conditions():
                wr.writerow([c, "average", f"{self.average(c):.6f}", f"{self.average(c, 'ssim'):.6f}",
                             f"{self.average(c, 'seconds'):.6f}"])

    def to_table(self):
        lines = [f"{'condition':<14} {'scene':>7} {'PSNR':>8} {'SSIM':>7} {'sec':>8}"]
        for r in self.rows:
            lines.append(f"{r['condition']:<14} {r['scene']:>7} {r['psnr']:>8.2f} {r['ssim']:>7.4f} "
                         f"{r['seconds']:>8.3f}")
        for c in self.conditions():
            lines.append(f"{c:<14} {'avg':>7} {self.average(c):>8.2f} {self.average(c, 'ssim'):>7.4f} "
                         f"{self.average(c, 'seconds'):>8.3f}")
        return "\n".join(lines)


def simulate(x, m):
    return forward_measure_color(x, m) if np.asarray(x).ndim == 4 else forward_measure(x, m)


def rmf_baseline(y, m, color=False):
    """The reference measurement frames as an estimate; color broadcasts the mosaic to RGB."""
    rmf = reference_frames(y, m).rmf
    return np.repeat(rmf[..., None], 3, axis=-1) if color else rmf


def _score(report, condition, scenes, masks, reconstructor):
    for i, (x, m) in enumerate(zip(scenes, masks)):
        y = simulate(x, m)
        t0 = time.perf_counter()
        est = reconstructor(y.data, m)
        dt = time.perf_counter() - t0
        report.add(condition, i, psnr(est, x), ssim_cube(est, x), dt)


def _model_fn(model):
    return lambda y, m: reconstruct(model, y, m)[0]


def eval_flexibility_masks(model, scenes, trained_mask, n_new=3, seed=1000, kind="binary",
                           reconstructor=None):
    """Score the seen mask and ``n_new`` unseen seeded masks on the same scenes."""
    fn = reconstructor or _model_fn(model)
    trained_mask = np.asarray(trained_mask)
    w, h, t = trained_mask.shape
    report = EvalReport()
    _score(report, "seen-mask", scenes, [trained_mask] * len(scenes), fn)
    for i in range(n_new):
        m = generate_masks(w, h, t, seed + i, kind).data
        _score(report, f"new-mask-{i + 1}", scenes, [m] * len(scenes), fn)
    return report


def eval_flexibility_scale(model, scenes, mask=None, seed=2000, kind="binary", reconstructor=None):
    """Full-frame reconstruction of scenes at a size the model was not trained on."""
    fn = reconstructor or _model_fn(model)
    w, h, t = np.asarray(scenes[0]).shape[:3]
    if w % 2 or h % 2:
        raise DimensionError(f"scene dims {w}x{h} must be divisible by 2")
    m = generate_masks(w, h, t, seed, kind).data if mask is None else np.asarray(mask)
    report = EvalReport()
    _score(report, f"scale-{w}x{h}", scenes, [m] * len(scenes), fn)
    return report


def tile_apply(fn, y, m, tiles=(1, 1)):
    """Run ``fn(y_block, m_block)`` on ``r x c`` non-overlapping blocks and stitch.

    ``c`` splits W (axis 0) and ``r`` splits H (axis 1); seams are not blended.
    """
    m = check_mask(m)
    y = check_measurement(y, m)
    r, c = tiles
    w, h = m.shape[:2]
    if r < 1 or c < 1 or w % (2 * c) or h % (2 * r):
        raise DimensionError(f"frame {w}x{h} cannot be split into {r}x{c} even-sized tiles")
    bw, bh = w // c, h // r
    out = None
    for i in range(c):
        for j in range(r):
            sl = (slice(i * bw, (i + 1) * bw), slice(j * bh, (j + 1) * bh))
            block = fn(y[sl], m[sl])
            if out is None:
                out = np.empty((w, h) + block.shape[2:], dtype=block.dtype)
            out[sl] = block
    return out


def tiled_reconstruct(model, y, m, tiles=(1, 1)):
    """Block-by-block network reconstruction of a large measurement."""
    return tile_apply(_model_fn(model), y, m, tiles)


def seam_distance(w, h, tiles):
    """Per-pixel distance (in pixels) to the nearest internal tile seam."""
    r, c = tiles
    d0 = np.full(w, np.inf)
    d1 = np.full(h, np.inf)
    idx0, idx1 = np.arange(w), np.arange(h)
    for k in range(1, c):
        s = k * (w // c)
        d0 = np.minimum(d0, np.where(idx0 < s, s - 1 - idx0, idx0 - s))
    for k in range(1, r):
        s = k * (h // r)
        d1 = np.minimum(d1, np.where(idx1 < s, s - 1 - idx1, idx1 - s))
    return np.minimum(d0[:, None], d1[None, :])
