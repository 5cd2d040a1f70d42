"""Input validation helpers shared by the functional API and the estimators."""
import numpy as np

from .exceptions import DimensionError


def as_array(obj, dtype=np.float64):
    """Return the ndarray behind ``obj`` (container types expose ``__array__``)."""
    arr = np.asarray(obj)
    if dtype is not None and arr.dtype != dtype:
        arr = arr.astype(dtype)
    return arr


def check_mask(m):
    m = as_array(m)
    if m.ndim != 3:
        raise DimensionError(f"mask cube must be 3-D (W, H, T), got shape {m.shape}")
    if min(m.shape) < 1:
        raise DimensionError(f"mask cube has an empty axis: {m.shape}")
    return m


def check_gray_video(x, m=None):
    x = as_array(x)
    if x.ndim != 3:
        raise DimensionError(f"grayscale video must be 3-D (W, H, T), got shape {x.shape}")
    if m is not None and x.shape != m.shape:
        raise DimensionError(f"video shape {x.shape} does not match mask shape {m.shape}")
    return x


def check_rgb_video(x, m=None):
    x = as_array(x)
    if x.ndim != 4 or x.shape[-1] != 3:
        raise DimensionError(f"color video must be 4-D (W, H, T, 3), got shape {x.shape}")
    if m is not None and x.shape[:3] != m.shape:
        raise DimensionError(f"video shape {x.shape[:3]} does not match mask shape {m.shape}")
    return x


def check_measurement(y, m):
    y = as_array(y)
    if y.shape != m.shape[:2]:
        raise DimensionError(f"measurement shape {y.shape} does not match mask spatial shape {m.shape[:2]}")
    return y


def check_even(shape, what="frame"):
    w, h = shape[0], shape[1]
    if w % 2 or h % 2:
        raise DimensionError(f"{what} dimensions must be even, got {w}x{h}")


def check_same_shape(a, b):
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch: {a.shape} vs {b.shape}")
