"""Parameter containers and the layers shared by every model in the package."""
from __future__ import annotations

import math

import numpy as np

from . import tensor as T
from .tensor import Tensor


def make_rng(seed):
    """Seeded generator; PCG64 streams are identical across platforms."""
    return np.random.Generator(np.random.PCG64(int(seed)))


def xavier(rng, fan_in, fan_out, shape=None, name=None):
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    shape = shape or (fan_in, fan_out)
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True, name=name)


def zeros(*shape, name=None):
    return Tensor(np.zeros(shape), requires_grad=True, name=name)


def ones(*shape, name=None):
    return Tensor(np.ones(shape), requires_grad=True, name=name)


class Module:
    """Collects tensors and sub-modules assigned as attributes, in definition order."""

    def named_tensors(self, prefix=""):
        out = {}
        for key, val in vars(self).items():
            if key.startswith("_"):
                continue
            name = f"{prefix}{key}"
            if isinstance(val, Tensor):
                out[name] = val
            elif isinstance(val, Module):
                out.update(val.named_tensors(name + "."))
            elif isinstance(val, (list, tuple)) and val and all(isinstance(v, Module) for v in val):
                for i, sub in enumerate(val):
                    out.update(sub.named_tensors(f"{name}.{i}."))
        return out

    def parameters(self, prefix=""):
        return {k: v for k, v in self.named_tensors(prefix).items() if v.requires_grad}

    def zero_grad(self):
        for p in self.parameters().values():
            p.zero_grad()

    def load_arrays(self, arrays, prefix="", strict=True):
        """Copy arrays (name -> ndarray) into this module's tensors in place."""
        mine = self.named_tensors(prefix)
        missing = [k for k in mine if k not in arrays]
        if strict and missing:
            raise KeyError(f"missing tensors: {missing}")
        bad = [f"{k}: {arrays[k].shape} vs {t.shape}" for k, t in mine.items()
               if k in arrays and arrays[k].shape != t.shape]
        if bad:
            raise ValueError("tensor shape mismatch: " + "; ".join(bad))
        for k, t in mine.items():
            if k in arrays:
                t.data = np.array(arrays[k], dtype=np.float64)
                if t.requires_grad:
                    t.grad = np.zeros_like(t.data)


class Linear(Module):
    def __init__(self, rng, d_in, d_out, bias=True):
        self.weight = xavier(rng, d_in, d_out)
        self.bias = zeros(d_out) if bias else None

    def __call__(self, x):
        y = x @ self.weight
        return y + self.bias if self.bias is not None else y


class LayerNorm(Module):
    def __init__(self, d):
        self.gain = ones(d)
        self.bias = zeros(d)

    def __call__(self, x):
        return T.layer_norm(x, self.gain, self.bias)


def scaled_dot_attention(q, k, v, mask=None, bias=None):
    """softmax(q k^T / sqrt(d) + bias) v, with ``mask`` (True = attend) applied exactly.

    Shapes: q [..., Lq, d], k [..., Lk, d], v [..., Lk, dv]; mask broadcastable
    to [..., Lq, Lk].
    """
    if q.shape[-1] != k.shape[-1]:
        raise T.ShapeError(f"attention feature mismatch: q {q.shape}, k {k.shape}")
    scores = (q @ T.swapaxes(k, -1, -2)) * (1.0 / math.sqrt(q.shape[-1]))
    if bias is not None:
        scores = scores + bias
    weights = T.softmax(scores, axis=-1, mask=mask)
    return weights @ v


def causal_mask(L):
    return np.tril(np.ones((L, L), dtype=bool))


class MultiHeadAttention(Module):
    """Multi-head attention from ``x`` [B, L, d] onto ``mem`` [B, M, d_mem]."""

    def __init__(self, rng, d_model, heads, d_mem=None):
        if d_model % heads:
            raise ValueError(f"d_model={d_model} not divisible by heads={heads}")
        d_mem = d_mem or d_model
        self._heads = heads
        self.q = Linear(rng, d_model, d_model)
        self.k = Linear(rng, d_mem, d_model)
        self.v = Linear(rng, d_mem, d_model)
        self.o = Linear(rng, d_model, d_model)

    def _split(self, x):
        B, L, d = x.shape
        h = self._heads
        return T.transpose(x.reshape(B, L, h, d // h), (0, 2, 1, 3))

    def __call__(self, x, mem=None, mask=None, bias=None):
        mem = x if mem is None else mem
        B, L, d = x.shape
        q, k, v = self._split(self.q(x)), self._split(self.k(mem)), self._split(self.v(mem))
        ctx = scaled_dot_attention(q, k, v, mask=mask, bias=bias)
        ctx = T.transpose(ctx, (0, 2, 1, 3)).reshape(B, L, d)
        return self.o(ctx)


class GRU(Module):
    """Single-layer GRU.

    z = s(x Wz + h Uz + bz), r = s(x Wr + h Ur + br),
    n = tanh(x Wn + (r*h) Un + bn), h' = (1 - z) * h + z * n
    """

    def __init__(self, rng, d_in, hidden):
        self.hidden = hidden
        for g in ("z", "r", "n"):
            setattr(self, f"W_{g}", xavier(rng, d_in, hidden))
            setattr(self, f"U_{g}", xavier(rng, hidden, hidden))
            setattr(self, f"b_{g}", zeros(hidden))

    def cell(self, x, h):
        z = T.sigmoid(x @ self.W_z + h @ self.U_z + self.b_z)
        r = T.sigmoid(x @ self.W_r + h @ self.U_r + self.b_r)
        n = T.tanh(x @ self.W_n + (r * h) @ self.U_n + self.b_n)
        return h + z * (n - h)

    def encode(self, emb, lengths=None, h0=None):
        """Final hidden state for ``emb`` [B, L, d] (or [L, d]).

        ``lengths`` gives the valid prefix per row; later steps leave h untouched.
        """
        single = emb.ndim == 2
        if single:
            emb = emb.reshape(1, *emb.shape)
        B, L, _ = emb.shape
        if L == 0:
            raise ValueError("gru_encode: empty sequence")
        if lengths is None:
            lengths = np.full(B, L)
        lengths = np.asarray(lengths)
        if lengths.min() < 1:
            raise ValueError("gru_encode: empty sequence")
        h = h0 if h0 is not None else Tensor(np.zeros((B, self.hidden)))
        if h.ndim == 1:
            h = h.reshape(1, -1) + Tensor(np.zeros((B, self.hidden)))
        for t in range(L):
            h_new = self.cell(emb[:, t, :], h)
            if np.all(lengths > t):
                h = h_new
            else:
                m = (lengths > t).astype(np.float64)[:, None]
                h = h + (h_new - h) * m
        return h[0] if single else h


def gru_encode(embeddings, gru, h0=None):
    """Final hidden state of ``gru`` run over ``embeddings`` [L, d]."""
    if embeddings.shape[0] == 0:
        raise ValueError("gru_encode: empty sequence")
    return gru.encode(embeddings, h0=h0)
