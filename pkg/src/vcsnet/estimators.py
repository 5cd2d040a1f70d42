"""scikit-learn style wrappers around the functional API.

Videos are ``(W, H, T)`` cubes (``(W, H, T, 3)`` for color) and measurements
are ``(W, H)`` frames.  Every method also accepts a stack with a leading
sample axis and then returns a stack.
"""
import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import as_array, check_mask
from .exceptions import DimensionError
from .gap_tv import GapTvConfig, gap_tv_reconstruct
from .metrics import psnr
from .sensing import forward_measure, forward_measure_color, generate_masks
from .training import TrainConfig, train
from .unfold_net import ModelConfig, UnfoldModel, reconstruct


def _stack(x, single_ndim):
    x = as_array(x)
    if x.ndim == single_ndim:
        return x[None], True
    if x.ndim == single_ndim + 1:
        return x, False
    raise DimensionError(f"expected {single_ndim}-D input or a stack of them, got shape {x.shape}")


def _video_ndim(color):
    return 4 if color else 3


class MeasurementSimulator(TransformerMixin, BaseEstimator):
    """Draws a seeded mask in ``fit`` and turns videos into snapshots in ``transform``."""

    def __init__(self, mask=None, mask_seed=0, mask_kind="binary", noise_sigma=0.0, color=False,
                 random_state=None):
        self.mask = mask
        self.mask_seed = mask_seed
        self.mask_kind = mask_kind
        self.noise_sigma = noise_sigma
        self.color = color
        self.random_state = random_state

    def fit(self, X, y=None):
        xs, _ = _stack(X, _video_ndim(self.color))
        if self.mask is not None:
            self.mask_ = check_mask(self.mask)
        else:
            w, h, t = xs.shape[1:4]
            self.mask_ = generate_masks(w, h, t, self.mask_seed, self.mask_kind).data
        if xs.shape[1:4] != self.mask_.shape:
            raise DimensionError(f"video shape {xs.shape[1:4]} does not match mask shape {self.mask_.shape}")
        self.n_frames_ = self.mask_.shape[2]
        return self

    def transform(self, X):
        check_is_fitted(self, "mask_")
        xs, single = _stack(X, _video_ndim(self.color))
        rng = np.random.default_rng(self.random_state)
        fn = forward_measure_color if self.color else forward_measure
        ys = np.stack([fn(x, self.mask_, self.noise_sigma, rng).data for x in xs])
        return ys[0] if single else ys


class _Reconstructor(RegressorMixin, BaseEstimator):
    color = False

    def _mask(self, mask):
        if mask is not None:
            return check_mask(mask)
        fitted = getattr(self, "mask_", None)
        if fitted is None:
            raise ValueError("no mask: pass mask= or fit with a mask first")
        return fitted

    def _reconstruct_one(self, y, m):
        raise NotImplementedError

    def predict(self, X, mask=None):
        """Reconstruct measurements ``X`` with ``mask`` (default: the fitted mask)."""
        m = self._mask(mask)
        ys, single = _stack(X, 2)
        out = np.stack([self._reconstruct_one(y, m) for y in ys])
        return out[0] if single else out

    def score(self, X, y=None, mask=None):
        """Mean PSNR (dB) of reconstructions of videos ``X`` simulated with the mask."""
        m = self._mask(mask)
        xs, _ = _stack(X, _video_ndim(self.color))
        fn = forward_measure_color if self.color else forward_measure
        return float(np.mean([psnr(self._reconstruct_one(fn(x, m).data, m), x) for x in xs]))


class GapTVReconstructor(_Reconstructor):
    """Classical GAP-TV baseline.  ``fit`` only records the mask."""

    def __init__(self, mask=None, iters=60, tv_weight=0.07, tv_inner_iters=5, tv_mode="anisotropic"):
        self.mask = mask
        self.iters = iters
        self.tv_weight = tv_weight
        self.tv_inner_iters = tv_inner_iters
        self.tv_mode = tv_mode

    def fit(self, X=None, y=None):
        self.config_ = GapTvConfig(self.iters, self.tv_weight, self.tv_inner_iters, self.tv_mode)
        self.mask_ = None if self.mask is None else check_mask(self.mask)
        return self

    def _reconstruct_one(self, y, m):
        check_is_fitted(self, "config_")
        return gap_tv_reconstruct(y, m, self.config_)


class UnfoldingReconstructor(_Reconstructor):
    """Deep unfolding network; ``fit`` trains on ground-truth videos.

    Passing ``X=None`` to ``fit`` trains on the built-in synthetic scenes.
    """

    def __init__(self, mask=None, stages=2, channels=16, blocks=4, mode="gray", memory_free=True, slope=0.01,
                 dtype="float32", epochs_per_phase=(15, 15, 10), batch_size=4, lr0=5e-5, samples=200,
                 frame_dims=(32, 32, 4), mask_seed=1, mask_kind="binary", noise_sigma=0.0,
                 resample_masks_per_batch=False, clip_norm=5.0, random_state=0):
        self.mask = mask
        self.stages = stages
        self.channels = channels
        self.blocks = blocks
        self.mode = mode
        self.memory_free = memory_free
        self.slope = slope
        self.dtype = dtype
        self.epochs_per_phase = epochs_per_phase
        self.batch_size = batch_size
        self.lr0 = lr0
        self.samples = samples
        self.frame_dims = frame_dims
        self.mask_seed = mask_seed
        self.mask_kind = mask_kind
        self.noise_sigma = noise_sigma
        self.resample_masks_per_batch = resample_masks_per_batch
        self.clip_norm = clip_norm
        self.random_state = random_state

    @property
    def color(self):
        return self.mode == "color"

    def _configs(self, frame_dims):
        seed = 0 if self.random_state is None else int(self.random_state)
        model_cfg = ModelConfig(self.stages, self.channels, self.blocks, self.mode, self.memory_free, self.slope,
                                seed, self.dtype)
        train_cfg = TrainConfig(epochs_per_phase=self.epochs_per_phase, batch_size=self.batch_size, lr0=self.lr0,
                                seed=seed, samples=self.samples, frame_dims=frame_dims, mode=self.mode,
                                resample_masks_per_batch=self.resample_masks_per_batch, mask_seed=self.mask_seed,
                                mask_kind=self.mask_kind, noise_sigma=self.noise_sigma, clip_norm=self.clip_norm)
        return model_cfg, train_cfg

    def fit(self, X=None, y=None):
        scenes = None
        frame_dims = tuple(self.frame_dims)
        if X is not None:
            xs, _ = _stack(X, _video_ndim(self.color))
            scenes = list(xs)
            frame_dims = xs.shape[1:4]
        model_cfg, train_cfg = self._configs(frame_dims)
        mask = None if self.mask is None else check_mask(self.mask)
        self.model_ = UnfoldModel(model_cfg)
        result = train(self.model_, train_cfg, scenes=scenes, mask=mask)
        self.mask_ = result.mask
        self.loss_log_ = result.log
        return self

    def _reconstruct_one(self, y, m):
        check_is_fitted(self, "model_")
        return reconstruct(self.model_, y, m)[0]

    @classmethod
    def from_model(cls, model, mask=None):
        """Wrap an already trained ``UnfoldModel``."""
        c = model.config
        est = cls(mask=mask, stages=c.stages, channels=c.channels, blocks=c.blocks, mode=c.mode,
                  memory_free=c.memory_free, slope=c.slope, dtype=c.dtype, random_state=c.seed)
        est.model_ = model
        est.mask_ = None if mask is None else check_mask(mask)
        est.loss_log_ = []
        return est
