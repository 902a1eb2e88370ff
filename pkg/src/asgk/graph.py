"""Medical tag graph encoder and the tag-classification losses."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .nn import LayerNorm, Linear, Module, MultiHeadAttention, scaled_dot_attention, xavier, zeros
from .tensor import Tensor

PROB_EPS = 1e-12


@dataclass
class FocalConfig:
    alpha: float = 0.25
    gamma: float = 2.0

    def __post_init__(self):
        if self.gamma < 0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")
        if not 0 < self.alpha <= 1:
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha}")


@dataclass
class TagGraph:
    node_probs: Tensor    # [B, N]  first-stage tag probabilities
    node_feats: Tensor    # [B, N, d] after prior attention and self-attention
    edges: Tensor         # [B, N, N] row-stochastic
    tag_probs: Tensor     # [B, N]  read-out probabilities fed to the BCE loss


class GraphEncoder(Module):
    def __init__(self, rng, n_tags, d_in, d=64, heads=4, edge_bias=True, prior_edges=None):
        if d % heads:
            raise ValueError(f"graph dim {d} not divisible by {heads} heads")
        self._d = d
        self._edge_bias = edge_bias
        self.W_v = xavier(rng, d_in, n_tags, shape=(n_tags, d_in))
        self.tag_embed = xavier(rng, n_tags, d, shape=(n_tags, d))
        self.edge_q = Linear(rng, d, d, bias=False)
        self.edge_k = Linear(rng, d, d, bias=False)
        self.prior_feats = xavier(rng, n_tags, d, shape=(n_tags, d))
        if prior_edges is None:
            prior_edges = np.full((n_tags, n_tags), 1.0 / n_tags)
        self.prior_edges = Tensor(prior_edges)
        self.prior_q = Linear(rng, d, d)
        self.prior_k = Linear(rng, d, d)
        self.prior_v = Linear(rng, d, d)
        self.prior_o = Linear(rng, d, d)
        self.self_attn = MultiHeadAttention(rng, d, heads)
        self.norm = LayerNorm(d)
        self.readout_w = xavier(rng, d, 1, shape=(n_tags, d))
        self.readout_b = zeros(n_tags)

    @property
    def n_tags(self):
        return self.W_v.shape[0]

    def encode_nodes(self, f_input):
        if f_input.shape[-1] != self.W_v.shape[1]:
            raise T.ShapeError(f"graph input dim {f_input.shape[-1]} != W_v width {self.W_v.shape[1]}")
        if f_input.ndim == 1:
            probs = T.sigmoid(T.reshape(f_input, (1, -1)) @ T.transpose(self.W_v))
            probs = T.reshape(probs, (self.n_tags,))
        else:
            probs = T.sigmoid(f_input @ T.transpose(self.W_v))
        feats = T.reshape(probs, probs.shape + (1,)) * self.tag_embed
        return probs, feats

    def encode_edges(self, feats):
        q, k = self.edge_q(feats), self.edge_k(feats)
        scores = (q @ T.swapaxes(k, -1, -2)) * (1.0 / math.sqrt(self._d))
        return T.softmax(scores, axis=-1)

    def attend_prior(self, feats, edges=None):
        """Encoded nodes query the prior graph; the result is added back residually."""
        q = self.prior_q(feats)
        k = self.prior_k(self.prior_feats)
        v = self.prior_v(self.prior_feats)
        bias = T.log(edges) if (self._edge_bias and edges is not None) else None
        return feats + self.prior_o(scaled_dot_attention(q, k, v, bias=bias))

    def self_attend(self, feats):
        squeeze = feats.ndim == 2
        x = feats.reshape(1, *feats.shape) if squeeze else feats
        out = self.norm(x + self.self_attn(x))
        return out[0] if squeeze else out

    def readout(self, feats):
        return T.sigmoid((feats * self.readout_w).sum(axis=-1) + self.readout_b)

    def __call__(self, f_input):
        probs, feats = self.encode_nodes(f_input)
        edges = self.encode_edges(feats)
        feats = self.attend_prior(feats, edges)
        feats = self.self_attend(feats)
        return TagGraph(probs, feats, edges, self.readout(feats))


def _clamp_prob(p):
    return T.clamp(p, PROB_EPS, 1.0 - PROB_EPS)


def _reduce(per_item):
    """Sum over tags, mean over any leading batch axes."""
    s = per_item.sum(axis=-1)
    return s.mean() if s.ndim else s


def tag_bce_loss(v, y):
    """-sum_i [y_i ln v_i + (1 - y_i) ln(1 - v_i)], averaged over the batch."""
    y = np.asarray(y, dtype=np.float64)
    v = _clamp_prob(v)
    return _reduce(-(T.log(v) * y + T.log(1.0 - v) * (1.0 - y)))


def focal_loss(p, y, cfg=None):
    """-sum_i alpha (1 - p*_i)^gamma ln p*_i with p* = p where y = 1 else 1 - p."""
    cfg = cfg or FocalConfig()
    y = np.asarray(y, dtype=np.float64)
    p_star = _clamp_prob(p * y + (1.0 - p) * (1.0 - y))
    logp = T.log(p_star)
    if cfg.gamma == 0:
        term = logp * cfg.alpha
    else:
        term = T.power(1.0 - p_star, cfg.gamma) * logp * cfg.alpha
    return _reduce(-term)


def cooccurrence_edges(tag_matrix):
    """Row-normalised tag co-occurrence counts (+1 smoothing) for prior_edges."""
    y = np.asarray(tag_matrix, dtype=np.float64)
    counts = y.T @ y + 1.0
    return counts / counts.sum(axis=1, keepdims=True)
