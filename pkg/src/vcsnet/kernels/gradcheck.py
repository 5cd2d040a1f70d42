"""Central finite-difference checks for tape gradients."""
import numpy as np

from .tensor import Tensor, no_grad


def relative_error(a, b, floor=1e-6):
    return abs(a - b) / max(abs(a), abs(b), floor)


def gradcheck(fn, inputs, probes=100, h=1e-5, seed=0):
    """Compare tape gradients of ``sum(fn(*inputs) * R)`` against central differences.

    ``inputs`` are float64 ndarrays; ``fn`` maps Tensors to one Tensor.  ``R``
    is a fixed random projection so every output element contributes.
    Returns the maximum relative error over ``probes`` random coordinates.
    """
    rng = np.random.default_rng(seed)
    inputs = [np.array(a, dtype=np.float64) for a in inputs]
    tensors = [Tensor(a.copy(), requires_grad=True) for a in inputs]
    out = fn(*tensors)
    proj = rng.standard_normal(out.shape)
    out.backward(proj)
    analytic = [t.grad if t.grad is not None else np.zeros_like(t.data) for t in tensors]

    def value(arrays):
        with no_grad():
            return float(np.sum(fn(*[Tensor(a) for a in arrays]).data * proj))

    sizes = np.array([a.size for a in inputs], dtype=float)
    worst = 0.0
    for _ in range(probes):
        k = int(rng.choice(len(inputs), p=sizes / sizes.sum()))
        idx = tuple(int(rng.integers(0, s)) for s in inputs[k].shape)
        plus = [a.copy() for a in inputs]
        minus = [a.copy() for a in inputs]
        plus[k][idx] += h
        minus[k][idx] -= h
        numeric = (value(plus) - value(minus)) / (2 * h)
        worst = max(worst, relative_error(float(analytic[k][idx]), numeric))
    return worst
