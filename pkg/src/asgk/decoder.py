"""GPT-style report decoder conditioned on the tag graph, plus the GRU sentence encoder."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .nn import GRU, LayerNorm, Linear, Module, MultiHeadAttention, causal_mask, xavier
from .tensor import Tensor

PAD, BOS, EOS, UNK = 0, 1, 2, 3
SPECIALS = ["<pad>", "<bos>", "<eos>", "<unk>"]


class Vocabulary:
    def __init__(self, tokens):
        self.itos = list(tokens)
        if self.itos[:4] != SPECIALS:
            raise ValueError("vocabulary must start with the reserved tokens")
        self.stoi = {t: i for i, t in enumerate(self.itos)}
        if len(self.stoi) != len(self.itos):
            raise ValueError("duplicate tokens in vocabulary")

    @classmethod
    def build(cls, token_lists, min_freq=3):
        counts = Counter(t for toks in token_lists for t in toks)
        kept = sorted((t for t, c in counts.items() if c >= min_freq and t not in SPECIALS),
                      key=lambda t: (-counts[t], t))
        return cls(SPECIALS + kept)

    def __len__(self):
        return len(self.itos)

    def encode(self, tokens):
        return [self.stoi.get(t, UNK) for t in tokens]

    def decode(self, ids):
        out = []
        for i in ids:
            i = int(i)
            if i == EOS:
                break
            if i in (PAD, BOS):
                continue
            out.append(self.itos[i])
        return out


def load_word_vectors(path, vocab, table):
    """Copy vectors from a plain-text ``word v1 v2 ...`` file into rows of ``table``.

    Words outside the vocabulary are skipped; returns how many rows were filled.
    """
    filled = 0
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) - 1 != table.shape[1]:
                raise ValueError(f"{path}:{lineno}: expected {table.shape[1]} values, got {len(parts) - 1}")
            row = vocab.stoi.get(parts[0])
            if row is not None:
                table[row] = np.asarray(parts[1:], dtype=np.float64)
                filled += 1
    return filled


def to_sequence(tokens, vocab, max_len=300):
    """[BOS] + ids + [EOS], content truncated so the whole sequence fits ``max_len``."""
    ids = vocab.encode(tokens)[:max_len - 2]
    return [BOS] + ids + [EOS]


def pad_batch(seqs):
    L = max(len(s) for s in seqs)
    out = np.full((len(seqs), L), PAD, dtype=np.int64)
    for i, s in enumerate(seqs):
        out[i, :len(s)] = s
    return out, np.array([len(s) for s in seqs])


@dataclass
class GenerationConfig:
    strategy: str = "greedy"
    max_len: int = 60
    temperature: float = 1.0


class DecoderBlock(Module):
    def __init__(self, rng, d_model, heads, d_ffn, d_graph):
        self.self_attn = MultiHeadAttention(rng, d_model, heads)
        self.ln1 = LayerNorm(d_model)
        self.cross_attn = MultiHeadAttention(rng, d_model, heads, d_mem=d_graph)
        self.ln2 = LayerNorm(d_model)
        self.ff1 = Linear(rng, d_model, d_ffn)
        self.ff2 = Linear(rng, d_ffn, d_model)
        self.ln3 = LayerNorm(d_model)

    def __call__(self, h, memory):
        L = h.shape[1]
        h = self.ln1(h + self.self_attn(h, mask=causal_mask(L)))
        h = self.ln2(h + self.cross_attn(h, memory))
        return self.ln3(h + self.ff2(T.gelu(self.ff1(h))))


def graph_memory(graph, edge_memory=False):
    """Node features the decoder attends to; optionally with edge-weighted aggregates."""
    feats = graph.node_feats
    if edge_memory:
        feats = T.concat([feats, graph.edges @ feats], axis=1)
    return feats


class Decoder(Module):
    def __init__(self, rng, vocab_size, d_model=64, n_blocks=3, heads=4, d_ffn=256,
                 d_graph=64, max_len=300, edge_memory=False):
        self._edge_memory = edge_memory
        self.W_e = xavier(rng, vocab_size, d_model, shape=(vocab_size, d_model))
        self.W_p = xavier(rng, max_len, d_model, shape=(max_len, d_model))
        self.blocks = [DecoderBlock(rng, d_model, heads, d_ffn, d_graph) for _ in range(n_blocks)]

    @property
    def max_len(self):
        return self.W_p.shape[0]

    def embed_tokens(self, ids, positions=None):
        ids = np.asarray(ids)
        if positions is None:
            positions = np.broadcast_to(np.arange(ids.shape[-1]), ids.shape)
        return T.embedding(self.W_e, ids) + T.embedding(self.W_p, positions)

    def hidden(self, ids, memory):
        h = self.embed_tokens(ids)
        for block in self.blocks:
            h = block(h, memory)
        return h

    def output_distribution(self, h):
        return T.softmax(h @ T.transpose(self.W_e), axis=-1)

    def __call__(self, ids, graph):
        """Next-token distributions [B, L, V] for input ``ids`` [B, L]."""
        memory = graph_memory(graph, self._edge_memory) if not isinstance(graph, Tensor) else graph
        return self.output_distribution(self.hidden(ids, memory))


def lm_loss(P, targets, mask=None):
    """Mean negative log-likelihood of ``targets`` under ``P`` over unmasked positions."""
    targets = np.asarray(targets)
    mask = np.ones(targets.shape, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ValueError("lm_loss: every position is masked")
    idx = np.nonzero(mask)
    picked = P[idx + (targets[idx],)]
    return -T.log(picked).sum() * (1.0 / len(idx[0]))


def teacher_forcing(seq_ids):
    """Inputs, targets and loss mask for a padded [B, L] batch of full sequences."""
    inputs = seq_ids[:, :-1]
    targets = seq_ids[:, 1:]
    return inputs, targets, targets != PAD


def generate(decoder, graph, cfg=None):
    """Greedy decoding; returns one id list per graph in the batch, each ending in EOS."""
    cfg = cfg or GenerationConfig()
    if cfg.strategy != "greedy":
        raise ValueError("only greedy decoding is implemented")
    if cfg.max_len > decoder.max_len:
        raise ValueError(f"max_len {cfg.max_len} exceeds position table {decoder.max_len}")
    with T.no_grad():
        memory = graph_memory(graph, decoder._edge_memory) if not isinstance(graph, Tensor) else graph
        B = memory.shape[0]
        seqs = np.full((B, 1), BOS, dtype=np.int64)
        done = np.zeros(B, dtype=bool)
        while seqs.shape[1] < cfg.max_len and not done.all():
            P = decoder(seqs, memory).data[:, -1].copy()
            P[:, [PAD, BOS]] = -1.0
            nxt = np.where(done, PAD, P.argmax(axis=-1))
            done |= nxt == EOS
            seqs = np.concatenate([seqs, nxt[:, None]], axis=1)
    out = []
    for row in seqs:
        ids = [int(i) for i in row if i != PAD]
        if ids[-1] != EOS:
            ids.append(EOS)
        out.append(ids)
    return out


class SentenceEncoder(Module):
    """GRU over word embeddings; projected to the graph encoder's input width."""

    def __init__(self, rng, d_model=64, hidden=128, d_out=64):
        self.gru = GRU(rng, d_model, hidden)
        self.proj = Linear(rng, hidden, d_out)

    def signal(self, W_e, ids, lengths):
        """GRU final state for each sentence; ``ids`` [B, L] content tokens, PAD after ``lengths``."""
        return self.gru.encode(T.embedding(W_e, ids), lengths=lengths)

    def __call__(self, W_e, ids, lengths):
        return self.proj(self.signal(W_e, ids, lengths))


def encode_external_signal(sentence_ids, W_e, gru):
    """GRU signal vector for a single sentence of token ids."""
    ids = np.asarray(sentence_ids)
    if ids.size == 0:
        raise ValueError("cannot encode an empty sentence")
    return gru.encode(T.embedding(W_e, ids))
