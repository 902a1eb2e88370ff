"""Central finite-difference check against the tape's gradients."""
from __future__ import annotations

import numpy as np

from .tensor import Tensor


def finite_diff_check(fn, inputs, h=1e-6):
    """Max relative error between autodiff and central differences.

    ``fn`` maps the list ``inputs`` (Tensors with requires_grad) to a scalar
    Tensor.  Each input's error is max |analytic - numeric| divided by the
    larger of the two gradients' max magnitudes (floored at 1e-4), which stays
    well defined for entries whose true gradient is zero.
    """
    for x in inputs:
        x.zero_grad()
    fn(inputs).backward()
    analytic = [x.grad.copy() for x in inputs]

    worst = 0.0
    for x, ga in zip(inputs, analytic):
        flat = x.data.reshape(-1)
        gflat = ga.reshape(-1)
        numeric = np.zeros_like(gflat)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = fn(inputs).item()
            flat[i] = orig - h
            fm = fn(inputs).item()
            flat[i] = orig
            numeric[i] = (fp - fm) / (2 * h)
        scale = max(np.abs(gflat).max(), np.abs(numeric).max(), 1e-4)
        worst = max(worst, float(np.abs(numeric - gflat).max() / scale))
    return worst


def random_projection_loss(rng, shape):
    """A fixed random weighting that turns any tensor output into a scalar loss."""
    w = Tensor(rng.standard_normal(shape))
    return lambda out: (out * w).sum()
