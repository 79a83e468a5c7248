import numpy as np
import pytest

from treesent import autodiff as ad
from treesent import encoder as enc
from treesent import tokenizer as tok
from treesent.autodiff import Tensor
from treesent.optim import make_rng

TINY = enc.ModelConfig(layers=2, hidden=16, heads=2, intermediate=32,
                       vocab_size=40, max_positions=16)


def tiny_params(seed=0, dtype=np.float32):
    return enc.init_params(TINY, make_rng(seed), dtype=dtype)


def letter_vocab():
    letters = [chr(c) for c in range(ord("a"), ord("z") + 1)]
    return tok.Vocab(list(tok.SPECIAL_TOKENS) + letters[:35 - 26]
                     + ["##" + c for c in letters[:35 - 26]])


class TestPresets:
    def test_base(self):
        cfg = enc.preset("base")
        assert (cfg.layers, cfg.hidden, cfg.heads, cfg.intermediate) == (12, 768, 12, 3072)

    def test_large(self):
        cfg = enc.preset("large")
        assert (cfg.layers, cfg.hidden, cfg.heads, cfg.intermediate) == (24, 1024, 16, 4096)

    def test_toy(self):
        cfg = enc.preset("toy")
        assert (cfg.layers, cfg.hidden, cfg.heads) == (2, 64, 2)
        assert cfg.hidden % cfg.heads == 0

    def test_unknown(self):
        with pytest.raises(enc.UnknownPresetError):
            enc.preset("giant")

    def test_heads_must_divide_hidden(self):
        with pytest.raises(ValueError):
            enc.ModelConfig(layers=1, hidden=10, heads=3, intermediate=8,
                            vocab_size=5, max_positions=4)


class TestParamCount:
    def test_matches_materialized_tensors(self):
        # oracle: actually allocate every tensor and add up sizes
        params = tiny_params()
        walked = sum(p.data.size for p in params.values())
        assert enc.param_count(TINY) == walked

    def test_base_near_published_total(self):
        assert abs(enc.param_count(enc.preset("base")) - 110e6) / 110e6 < 0.05

    def test_large_near_published_total(self):
        assert abs(enc.param_count(enc.preset("large")) - 340e6) / 340e6 < 0.05


class TestInit:
    def test_deterministic_per_seed(self):
        p1, p2 = tiny_params(3), tiny_params(3)
        for name in p1:
            np.testing.assert_array_equal(p1[name].data, p2[name].data)
        p3 = tiny_params(4)
        assert any((p1[n].data != p3[n].data).any() for n in p1 if n.endswith(".w"))

    def test_layer_norm_gains_are_one(self):
        params = tiny_params()
        for name, p in params.items():
            if name.endswith(".g"):
                np.testing.assert_array_equal(p.data, np.ones_like(p.data))
            if name.endswith(".b"):
                np.testing.assert_array_equal(p.data, np.zeros_like(p.data))

    def test_weight_std_in_band(self):
        rng = make_rng(0)
        draws = enc._truncated_normal(rng, (100, 100), 0.02)
        assert 0.015 <= draws.std() <= 0.025
        assert np.abs(draws).max() <= 0.04 + 1e-6


class TestAttentionBlock:
    def test_single_position_finite(self):
        params = tiny_params()
        x = Tensor(make_rng(1).normal(size=(1, 16)).astype(np.float32))
        out = enc.attention_block(x, params, 0, TINY, np.array([1]))
        assert out.data.shape == (1, 16)
        assert np.isfinite(out.data).all()

    def test_isolated_position_attends_to_itself(self):
        # with all other keys masked, output row 0 must match the
        # single-position computation on the same row
        params = tiny_params()
        rng = make_rng(2)
        rows = rng.normal(size=(3, 16)).astype(np.float32)
        full = enc.attention_block(Tensor(rows), params, 0, TINY, np.array([1, 0, 0]))
        solo = enc.attention_block(Tensor(rows[:1]), params, 0, TINY, np.array([1]))
        np.testing.assert_allclose(full.data[0], solo.data[0], atol=1e-5)

    def test_permutation_equivariance(self):
        params = tiny_params()
        rng = make_rng(3)
        rows = rng.normal(size=(4, 16)).astype(np.float32)
        mask = np.array([1, 1, 1, 1])
        perm = np.array([0, 2, 1, 3])
        out = enc.attention_block(Tensor(rows), params, 0, TINY, mask)
        out_p = enc.attention_block(Tensor(rows[perm]), params, 0, TINY, mask[perm])
        np.testing.assert_allclose(out.data[perm], out_p.data, atol=1e-5)

    def test_mask_length_checked(self):
        params = tiny_params()
        x = Tensor(np.zeros((3, 16), dtype=np.float32))
        with pytest.raises(ad.ShapeMismatchError):
            enc.attention_block(x, params, 0, TINY, np.array([1, 1]))

    def test_masked_attention_rows_sum_over_unmasked(self):
        # softmax over additively masked scores: zero weight on masked keys,
        # unit total over the rest
        rng = make_rng(4)
        scores = rng.normal(size=(5, 6))
        mask = np.array([1, 1, 0, 1, 0, 1], dtype=float)
        biased = scores + (1.0 - mask) * enc.NEG_INF
        attn = ad.softmax(Tensor(biased, dtype=np.float64)).data
        np.testing.assert_allclose(attn[:, mask == 0], 0.0, atol=1e-12)
        np.testing.assert_allclose(attn[:, mask == 1].sum(axis=1), 1.0, atol=1e-6)


class TestEncode:
    def setup_method(self):
        self.vocab = letter_vocab()
        self.params = tiny_params()

    def test_shape_contract(self):
        seq = tok.encode("abc de", self.vocab, 12)
        hidden, pooled = enc.encode(seq, self.params, TINY)
        assert hidden.data.shape == (12, 16)
        assert pooled.data.shape == (16,)

    def test_pad_region_cannot_influence_pooled(self):
        seq = tok.encode("ab", self.vocab, 10)
        _, pooled = enc.encode(seq, self.params, TINY)
        ids2 = seq.ids.copy()
        ids2[seq.n_real:] = 7  # arbitrary non-pad id in the illegal region
        seq2 = tok.TokenSequence(ids=ids2, segment_ids=seq.segment_ids,
                                 mask=seq.mask, n_real=seq.n_real)
        _, pooled2 = enc.encode(seq2, self.params, TINY)
        np.testing.assert_allclose(pooled.data, pooled2.data, atol=1e-6)

    def test_inference_bitwise_deterministic(self):
        seq = tok.encode("abc", self.vocab, 8)
        _, p1 = enc.encode(seq, self.params, TINY, training=False)
        _, p2 = enc.encode(seq, self.params, TINY, training=False)
        np.testing.assert_array_equal(p1.data, p2.data)

    def test_pooled_invariant_to_padding_length(self):
        s16 = tok.encode("abc de f", self.vocab, 16)
        s8 = tok.encode("abc de f", self.vocab, 8)
        assert s16.n_real == s8.n_real  # same real tokens, different padding
        _, p16 = enc.encode(s16, self.params, TINY)
        _, p8 = enc.encode(s8, self.params, TINY)
        np.testing.assert_allclose(p16.data, p8.data, atol=1e-5)

    def test_id_out_of_range(self):
        seq = tok.encode("abc", self.vocab, 8)
        bad = tok.TokenSequence(ids=np.full_like(seq.ids, 4000),
                                segment_ids=seq.segment_ids, mask=seq.mask,
                                n_real=seq.n_real)
        with pytest.raises(ad.IndexOutOfRangeError):
            enc.encode(bad, self.params, TINY)

    def test_sequence_longer_than_positions(self):
        long_cfg_seq = tok.encode("a b c", self.vocab, TINY.max_positions + 4)
        with pytest.raises(ad.IndexOutOfRangeError):
            enc.encode(long_cfg_seq, self.params, TINY)


class TestEndToEndGradients:
    def test_encoder_gradcheck_float64(self):
        params = tiny_params(dtype=np.float64)
        vocab = letter_vocab()
        seq = tok.encode("ab cd", vocab, 8)
        rng = make_rng(5)
        names = ["emb.tok", "layer.0.attn.q.w", "layer.1.ffn.in.w",
                 "layer.0.ln1.g", "pooler.w", "emb.pos"]
        w = Tensor(rng.normal(size=16), dtype=np.float64)

        for name in names:
            target = params[name]

            def f(t):
                saved = params[name]
                params[name] = t
                try:
                    _, pooled = enc.encode(seq, params, TINY)
                    return ad.tensor_sum(ad.mul(pooled, w))
                finally:
                    params[name] = saved

            idx = rng.choice(target.data.size, size=min(6, target.data.size),
                             replace=False)
            err = ad.finite_diff_check(f, target, indices=idx)
            assert err < 1e-5, name

    def test_encoder_gradcheck_float32(self):
        params = tiny_params(dtype=np.float32)
        vocab = letter_vocab()
        seq = tok.encode("ab cd", vocab, 8)
        rng = make_rng(6)
        w = Tensor(rng.normal(size=16).astype(np.float32))

        target = params["layer.0.attn.v.w"]

        def f(t):
            saved = params["layer.0.attn.v.w"]
            params["layer.0.attn.v.w"] = t
            try:
                _, pooled = enc.encode(seq, params, TINY)
                return ad.tensor_sum(ad.mul(pooled, w))
            finally:
                params["layer.0.attn.v.w"] = saved

        idx = rng.choice(target.data.size, size=8, replace=False)
        assert ad.finite_diff_check(f, target, indices=idx) < 1e-3
