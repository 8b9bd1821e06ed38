import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from smre import tensor as T
from smre.decoder import (attend, beam_search, beam_search_decode, caption_cross_entropy,
                          decode_step, greedy_decode, init_state, prepare_memory,
                          teacher_forced_decode)
from smre.encoders import BOS, EOS
from smre.errors import ContractError, ShapeError
from smre.params import init_params

from conftest import SMALL_DIMS
from oracles import (TableModel, decoder_prefix_logprob, enumerate_best, log_softmax,
                     reference_beam)


def _model(V=9, seed=0, dims=SMALL_DIMS, dtype=np.float64, scale=3.0):
    params = init_params(dims, V, seed=seed, dtype=dtype)
    # sharper output head so decoding is not a coin toss
    params["dec.out_W"].data = params["dec.out_W"].data * scale
    params["dec.out_b"].data = np.random.default_rng(seed).normal(size=V).astype(dtype)
    return params


class TestAttention:
    def test_single_clip(self, f64, rng):
        params = _model()
        memory = prepare_memory(T.Tensor(rng.normal(size=(2, 1, SMALL_DIMS.d_h))), params)
        _, alpha = attend(memory, T.Tensor(rng.normal(size=(2, SMALL_DIMS.d_dec))), params)
        np.testing.assert_array_equal(alpha.data, 1.0)

    @given(st.integers(0, 2 ** 31))
    def test_weights_are_distribution(self, seed):
        r = np.random.default_rng(seed)
        with T.precision(np.float64):
            params = _model(seed=seed % 97)
            memory = prepare_memory(T.Tensor(r.normal(size=(3, 26, SMALL_DIMS.d_h)) * 3), params)
            state = init_state(3, SMALL_DIMS.d_dec)
            state.h_lang = T.Tensor(r.normal(size=(3, SMALL_DIMS.d_dec)))
            emb = T.Tensor(r.normal(size=(3, SMALL_DIMS.d_e)))
            _, _, alpha = decode_step(memory, emb, state, params, return_attention=True)
        assert (alpha.data >= 0).all()
        np.testing.assert_allclose(alpha.data.sum(-1), 1.0, atol=1e-6)

    def test_zero_model_emits_output_bias(self, f64, rng):
        params = init_params(SMALL_DIMS, 7, zero=True, dtype=np.float64)
        params["dec.out_b"].data = rng.normal(size=7)
        logits, _ = decode_step(T.Tensor(rng.normal(size=(2, 26, SMALL_DIMS.d_h))),
                                T.Tensor(np.zeros((2, SMALL_DIMS.d_e))),
                                init_state(2, SMALL_DIMS.d_dec), params)
        np.testing.assert_array_equal(logits.data, np.tile(params["dec.out_b"].data, (2, 1)))

    def test_state_shape_checked(self, f64, rng):
        params = _model()
        with pytest.raises(ShapeError):
            decode_step(T.Tensor(rng.normal(size=(2, 3, SMALL_DIMS.d_h))),
                        T.Tensor(np.zeros((2, SMALL_DIMS.d_e))), init_state(3, SMALL_DIMS.d_dec),
                        params)


class TestTeacherForcing:
    def _inputs(self, rng):
        caps = np.array([[BOS, 4, 5, 6, EOS], [BOS, 7, 8, EOS, 0]])
        mask = (np.arange(5) < np.array([[5], [4]])).astype(int)
        return T.Tensor(rng.normal(size=(2, 26, SMALL_DIMS.d_h))), caps, mask

    def test_gold_prefix(self, f64, rng):
        params = _model()
        v_mid, caps, mask = self._inputs(rng)
        logits = teacher_forced_decode(v_mid, caps, mask, params, tel_prob=1.0).data
        memory = prepare_memory(v_mid, params)
        state = init_state(2, SMALL_DIMS.d_dec)
        for t in range(4):
            step, state = decode_step(memory, T.embedding(params["dec.embed"], caps[:, t]), state,
                                      params)
            np.testing.assert_allclose(logits[:, t], step.data, atol=1e-12)

    def test_single_step(self, f64, rng):
        params = _model()
        v_mid = T.Tensor(rng.normal(size=(1, 26, SMALL_DIMS.d_h)))
        out = teacher_forced_decode(v_mid, np.array([[BOS, 4]]), np.ones((1, 2)), params)
        assert out.shape == (1, 1, 9)

    def test_scheduled_feeding_repeatable(self, f64, rng):
        params = _model()
        v_mid, caps, mask = self._inputs(rng)
        a = teacher_forced_decode(v_mid, caps, mask, params, 0.0, np.random.default_rng(5)).data
        b = teacher_forced_decode(v_mid, caps, mask, params, 0.0, np.random.default_rng(5)).data
        np.testing.assert_array_equal(a, b)

    def test_scheduled_feeding_needs_rng(self, rng):
        params = _model()
        v_mid, caps, mask = self._inputs(rng)
        with pytest.raises(ContractError):
            teacher_forced_decode(v_mid, caps, mask, params, 0.5)


class TestCrossEntropy:
    def test_uniform(self, f64):
        caps = np.array([[BOS, 5, 9, EOS]])
        loss = caption_cross_entropy(T.Tensor(np.zeros((1, 3, 16))), caps, np.ones((1, 4)))
        assert float(loss.data) == pytest.approx(math.log(16), abs=1e-12)

    def test_confident_correct(self, f64):
        caps = np.array([[BOS, 5, EOS]])
        logits = np.full((1, 2, 8), -50.0)
        logits[0, 0, 5] = logits[0, 1, EOS] = 50.0
        assert float(caption_cross_entropy(T.Tensor(logits), caps, np.ones((1, 3))).data) < 1e-30

    def test_hand_batch(self, f64):
        logits = np.array([[[1.0, 2.0, 0.5], [0.0, -1.0, 3.0]]])
        caps = np.array([[0, 1, 2]])
        got = float(caption_cross_entropy(T.Tensor(logits), caps, np.ones((1, 3))).data)
        nll = [-(logits[0, t, k] - math.log(sum(math.exp(v) for v in logits[0, t])))
               for t, k in ((0, 1), (1, 2))]
        assert got == pytest.approx(sum(nll) / 2, abs=1e-12)


class TestBeam:
    def test_forced_chain(self):
        chain = [5, 6, EOS]

        def step_fn(last, state):
            lp = np.full((len(last), 8), -np.inf)
            for r, prev in enumerate(last):
                lp[r, chain[[BOS, 5, 6].index(int(prev))]] = 0.0
            return lp, state

        class S:
            def select(self, rows):
                return self

        for k in (1, 2, 5):
            assert beam_search(step_fn, S(), BOS, EOS, k, 10).tokens == [BOS] + chain

    @pytest.mark.parametrize("seed", range(5))
    def test_beam_one_is_greedy(self, seed):
        params = _model(V=12, seed=seed, dtype=np.float32)
        v_mid = T.Tensor(np.random.default_rng(seed).normal(size=(20, 26, SMALL_DIMS.d_h))
                         .astype(np.float32))
        greedy = greedy_decode(v_mid, params, max_len=8)
        for i in range(20):
            assert beam_search_decode(v_mid.data[i:i + 1], params, 1, 8) == greedy[i]

    @pytest.mark.parametrize("k", [1, 2, 3, 4])
    def test_decoder_toy_matches_enumeration(self, f64, k):
        # |V|=4 leaves EOS and UNK live, so any k >= 2 keeps every candidate
        for seed in range(10):
            params = _model(V=4, seed=seed)
            v_mid = np.random.default_rng(seed).normal(size=(1, 26, SMALL_DIMS.d_h))
            score = lambda s: decoder_prefix_logprob(params, v_mid, s)
            got = beam_search_decode(v_mid, params, k, 3)
            ref = reference_beam(score, 4, 3, EOS, k)
            assert got == [t for t in ref if t != EOS]
            if k >= 2:
                best, _ = enumerate_best(score, 4, 3, EOS)
                assert got == [t for t in best if t != EOS]

    def test_greedy_can_miss_global_optimum(self, f64):
        misses = 0
        for seed in range(10):
            params = _model(V=4, seed=seed)
            v_mid = np.random.default_rng(seed).normal(size=(1, 26, SMALL_DIMS.d_h))
            best, _ = enumerate_best(lambda s: decoder_prefix_logprob(params, v_mid, s), 4, 3, EOS)
            misses += beam_search_decode(v_mid, params, 1, 3) != [t for t in best if t != EOS]
        assert misses > 0

    @pytest.mark.parametrize("k", [1, 2, 3, 4, 6])
    def test_table_model_matches_reference_beam(self, k):
        for seed in range(25):
            m = TableModel(4, seed)
            got = beam_search(m.step_fn, m.init(), -1, 0, k, 3).tokens[1:]
            assert tuple(got) == reference_beam(m.score, 4, 3, 0, k)

    @pytest.mark.parametrize("k", [12, 16, 64])
    def test_wide_beam_is_exhaustive(self, k):
        for seed in range(25):
            m = TableModel(4, seed)
            hyp = beam_search(m.step_fn, m.init(), -1, 0, k, 3)
            best, best_score = enumerate_best(m.score, 4, 3, 0)
            assert tuple(hyp.tokens[1:]) == best
            assert hyp.log_prob == pytest.approx(best_score, abs=1e-12)

    def test_reported_score_is_sequence_logprob(self):
        m = TableModel(5, 3)
        hyp = beam_search(m.step_fn, m.init(), -1, 0, 3, 4)
        assert hyp.log_prob == pytest.approx(m.score(hyp.tokens[1:]), abs=1e-12)

    def test_length_norm_prefers_longer(self):
        # EOS immediately costs log 0.4; a 3-word caption costs log 0.6 per step
        def step_fn(last, state):
            lp = np.full((len(last), 3), -np.inf)
            lp[:, 0] = np.log(0.4)
            lp[:, 2] = np.log(0.6)
            return lp, state

        class S:
            def select(self, rows):
                return self

        plain = beam_search(step_fn, S(), 1, 0, 2, 3)
        normed = beam_search(step_fn, S(), 1, 0, 2, 3, length_norm=True)
        assert plain.tokens == [1, 0]
        assert len(normed.tokens) > len(plain.tokens)

    def test_bad_sizes(self):
        with pytest.raises(ContractError):
            beam_search(None, None, BOS, EOS, 0, 3)
        with pytest.raises(ContractError):
            beam_search(None, None, BOS, EOS, 2, 0)


def test_log_softmax_oracle():
    np.testing.assert_allclose(np.exp(log_softmax([1.0, 2.0, 3.0])).sum(), 1.0)
