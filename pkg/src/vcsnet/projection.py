"""GAP projection onto {x : Phi x = y} and a dense sensing-matrix oracle."""
import numpy as np

from ._validation import check_gray_video, check_mask, check_measurement
from .exceptions import CapacityError

EPS = 1e-6
DENSE_LIMIT = 2 ** 16


def q_diagonal(m):
    """Diagonal of Phi Phi^T, laid out as a (W, H) array."""
    m = check_mask(m)
    return np.sum(m * m, axis=2)


def _residual_gain(m, q=None):
    q = q_diagonal(m) if q is None else q
    inv = np.zeros_like(q)
    sensed = q > EPS
    inv[sensed] = 1.0 / q[sensed]
    return inv


def gap_project(v, y, m):
    """Euclidean projection of ``v`` onto the measurement-consistent set.

    Pixels with ``q <= EPS`` are left untouched (pseudo-inverse convention).
    The result is not clipped.
    """
    m = check_mask(m)
    v = check_gray_video(v, m)
    y = check_measurement(y, m)
    r = (y - np.sum(m * v, axis=2)) * _residual_gain(m)
    return v + m * r[:, :, None]


def dense_phi(m):
    """Phi = [Diag(vec M_1), ..., Diag(vec M_T)], row-major vec over (row, col)."""
    m = check_mask(m)
    w, h, t = m.shape
    if w * h * t > DENSE_LIMIT:
        raise CapacityError(f"dense Phi of size {w * h}x{w * h * t} exceeds the {DENSE_LIMIT} column guard")
    return np.hstack([np.diag(m[:, :, k].reshape(-1)) for k in range(t)])


def vec(x):
    """Stack frames of a (W, H, T) cube into the column order used by dense_phi."""
    return np.concatenate([x[:, :, k].reshape(-1) for k in range(x.shape[2])])


def unvec(z, shape):
    w, h, t = shape
    return np.stack([z[k * w * h:(k + 1) * w * h].reshape(w, h) for k in range(t)], axis=2)
