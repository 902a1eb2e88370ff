import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from asgk import tensor as T
from asgk.decoder import (BOS, EOS, PAD, UNK, Decoder, GenerationConfig, SentenceEncoder, Vocabulary,
                          generate, lm_loss, load_word_vectors, pad_batch, teacher_forcing, to_sequence)
from asgk.nn import GRU, make_rng
from asgk.tensor import Tensor

words = st.lists(st.sampled_from(["a", "b", "c", "d", "e"]), min_size=1, max_size=12)


def tiny_decoder(vocab=12, seed=0, **kw):
    return Decoder(make_rng(seed), vocab, d_model=16, n_blocks=3, heads=2, d_ffn=32, d_graph=8,
                   max_len=40, **kw)


class TestVocabulary:
    def test_min_freq_and_order(self):
        v = Vocabulary.build([["b", "a", "a"], ["a", "b", "c"]], min_freq=2)
        assert v.itos == ["<pad>", "<bos>", "<eos>", "<unk>", "a", "b"]

    @given(words)
    def test_round_trip(self, toks):
        v = Vocabulary.build([toks], min_freq=1)
        assert v.decode(v.encode(toks)) == toks

    def test_unknown_maps_to_unk(self):
        v = Vocabulary.build([["x"]], min_freq=1)
        assert v.encode(["y"]) == [UNK]

    def test_decode_stops_at_eos(self):
        v = Vocabulary.build([["x", "y"]], min_freq=1)
        assert v.decode([BOS, 4, EOS, 5]) == [v.itos[4]]

    def test_specials_required(self):
        with pytest.raises(ValueError):
            Vocabulary(["a", "b"])

    @given(words, st.integers(3, 20))
    def test_sequence_fits(self, toks, max_len):
        v = Vocabulary.build([toks], min_freq=1)
        seq = to_sequence(toks, v, max_len)
        assert seq[0] == BOS and seq[-1] == EOS and len(seq) <= max_len


class TestWordVectors:
    def test_known_words_fill_rows(self, tmp_path):
        v = Vocabulary.build([["heart", "lung"]], min_freq=1)
        table = np.zeros((len(v), 3))
        path = tmp_path / "vec.txt"
        path.write_text("heart 1 2 3\nkidney 9 9 9\n\nlung 0.5 0 -1\n")
        assert load_word_vectors(path, v, table) == 2
        np.testing.assert_array_equal(table[v.stoi["heart"]], [1, 2, 3])
        np.testing.assert_array_equal(table[v.stoi["lung"]], [0.5, 0, -1])
        assert not table[:4].any()

    def test_width_mismatch(self, tmp_path):
        v = Vocabulary.build([["heart"]], min_freq=1)
        (tmp_path / "vec.txt").write_text("heart 1 2\n")
        with pytest.raises(ValueError, match="expected 3"):
            load_word_vectors(tmp_path / "vec.txt", v, np.zeros((len(v), 3)))


class TestDecoder:
    def test_causality(self, rng):
        dec = tiny_decoder()
        memory = Tensor(rng.standard_normal((1, 4, 8)))
        ids = rng.integers(4, 12, (1, 10))
        base = dec(ids, memory).data
        for pos in range(1, 10):
            changed = ids.copy()
            changed[0, pos] = (changed[0, pos] + 1 - 4) % 8 + 4
            out = dec(changed, memory).data
            np.testing.assert_array_equal(out[0, :pos], base[0, :pos])

    def test_tied_output_projection(self, rng):
        dec = tiny_decoder()
        memory = Tensor(rng.standard_normal((2, 3, 8)))
        ids = rng.integers(0, 12, (2, 5))
        h = dec.hidden(ids, memory).data
        logits = h @ dec.W_e.data.T
        expected = np.exp(logits - logits.max(-1, keepdims=True))
        expected /= expected.sum(-1, keepdims=True)
        np.testing.assert_allclose(dec(ids, memory).data, expected, atol=1e-12)

    def test_lm_loss_against_manual_nll(self, rng):
        P = rng.random((2, 3, 5))
        P /= P.sum(-1, keepdims=True)
        targets = np.array([[1, 4, 0], [2, 2, 3]])
        mask = np.array([[1, 1, 0], [1, 1, 1]], dtype=bool)
        manual = -np.mean([math.log(P[b, t, targets[b, t]]) for b in range(2) for t in range(3) if mask[b, t]])
        assert lm_loss(Tensor(P), targets, mask).item() == pytest.approx(manual, rel=1e-12)

    def test_lm_loss_all_masked(self):
        with pytest.raises(ValueError):
            lm_loss(Tensor(np.full((1, 2, 3), 1 / 3)), np.zeros((1, 2), int), np.zeros((1, 2), bool))

    def test_teacher_forcing_shift(self):
        batch, lengths = pad_batch([[BOS, 5, 6, EOS], [BOS, 7, EOS]])
        inputs, targets, mask = teacher_forcing(batch)
        np.testing.assert_array_equal(inputs, [[BOS, 5, 6], [BOS, 7, EOS]])
        np.testing.assert_array_equal(targets, [[5, 6, EOS], [7, EOS, PAD]])
        np.testing.assert_array_equal(mask, [[1, 1, 1], [1, 1, 0]])
        np.testing.assert_array_equal(lengths, [4, 3])

    def test_generation_is_deterministic_and_terminated(self, rng):
        dec = tiny_decoder()
        memory = Tensor(rng.standard_normal((3, 4, 8)))
        cfg = GenerationConfig(max_len=15)
        first, second = generate(dec, memory, cfg), generate(dec, memory, cfg)
        assert first == second
        for seq in first:
            assert seq[0] == BOS and seq[-1] == EOS and len(seq) <= 16
            assert PAD not in seq[1:-1] and BOS not in seq[1:]

    def test_generation_length_limit(self):
        with pytest.raises(ValueError):
            generate(tiny_decoder(), Tensor(np.zeros((1, 2, 8))), GenerationConfig(max_len=41))

    def test_edge_memory_doubles_memory_rows(self, rng):
        from asgk.decoder import graph_memory
        from asgk.graph import GraphEncoder
        graph = GraphEncoder(make_rng(0), 3, 5, 8, heads=2)(Tensor(rng.standard_normal((2, 5))))
        assert graph_memory(graph, edge_memory=True).shape == (2, 6, 8)
        assert graph_memory(graph).shape == (2, 3, 8)


class TestSentenceEncoder:
    def test_padding_after_length_is_ignored(self, rng):
        enc = SentenceEncoder(make_rng(0), d_model=6, hidden=5, d_out=4)
        W_e = Tensor(rng.standard_normal((10, 6)))
        ids = np.array([[4, 5, 6, 0, 0], [4, 5, 6, 9, 9]])
        out = enc(W_e, ids, np.array([3, 3])).data
        np.testing.assert_allclose(out[0], out[1], atol=1e-14)

    def test_gru_matches_manual_recurrence(self, rng):
        gru = GRU(make_rng(1), 3, 4)
        x = rng.standard_normal((5, 3))
        sig = lambda a: 1 / (1 + np.exp(-a))
        h = np.zeros(4)
        for t in range(5):
            z = sig(x[t] @ gru.W_z.data + h @ gru.U_z.data + gru.b_z.data)
            r = sig(x[t] @ gru.W_r.data + h @ gru.U_r.data + gru.b_r.data)
            n = np.tanh(x[t] @ gru.W_n.data + (r * h) @ gru.U_n.data + gru.b_n.data)
            h = (1 - z) * h + z * n
        np.testing.assert_allclose(gru.encode(Tensor(x)).data, h, atol=1e-12)

    def test_empty_sequence_rejected(self):
        with pytest.raises(ValueError):
            GRU(make_rng(0), 3, 4).encode(Tensor(np.zeros((0, 3))))
