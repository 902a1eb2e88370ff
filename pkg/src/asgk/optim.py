"""Adam with bias correction, plus the step-decay schedule used for backbone training."""
from __future__ import annotations

import numpy as np


class Adam:
    """Adam over a name -> Tensor mapping.

    Moment buffers are created lazily (zeros) the first time a parameter is
    updated, and ``state_arrays``/``load_state_arrays`` expose them for
    checkpointing.
    """

    def __init__(self, params, lr=5e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        if lr <= 0:
            raise ValueError(f"learning rate must be positive, got {lr}")
        self.params = dict(params)
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.step_count = 0
        self.m = {}
        self.v = {}

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()

    def step(self):
        self.step_count += 1
        t = self.step_count
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** t
        c2 = 1.0 - b2 ** t
        for name, p in self.params.items():
            g = p.grad
            if name not in self.m:
                self.m[name] = np.zeros_like(p.data)
                self.v[name] = np.zeros_like(p.data)
            m, v = self.m[name], self.v[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def state_arrays(self, prefix):
        out = {}
        for name in self.params:
            if name in self.m:
                out[f"{prefix}m/{name}"] = self.m[name]
                out[f"{prefix}v/{name}"] = self.v[name]
        return out

    def load_state_arrays(self, arrays, prefix, step_count):
        self.step_count = int(step_count)
        for name in self.params:
            if f"{prefix}m/{name}" in arrays:
                self.m[name] = np.array(arrays[f"{prefix}m/{name}"])
                self.v[name] = np.array(arrays[f"{prefix}v/{name}"])


def adam_step(params, grads, state):
    """Functional form: apply one Adam update to ``params`` using ``grads``.

    ``state`` is an :class:`Adam` instance holding the moment buffers and step
    count; ``params`` and ``grads`` are name -> ndarray maps updated in place.
    """
    for name, g in grads.items():
        state.params[name].grad = g
        state.params[name].data = params[name]
    state.step()
    return params, state


def step_decay_lr(epoch, start=1e-2, factor=0.1, every=10, floor=1e-5):
    """Learning rate for a 0-based ``epoch``: ``start * factor**(epoch // every)``, floored."""
    return max(start * factor ** (epoch // every), floor)
