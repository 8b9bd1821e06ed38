"""Two-LSTM attention decoder (attention LSTM feeding a language LSTM).

Each step: the attention LSTM reads [previous word ; mean clip state ;
previous language state], its hidden state queries additive attention over
the clip states, and the language LSTM reads [attended context ; attention
state] and produces vocabulary logits.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .encoders import BOS, EOS, PAD
from .errors import ContractError, ShapeError

# never generated at inference time
BANNED = (PAD, BOS)


@dataclass
class DecoderState:
    h_att: T.Tensor
    c_att: T.Tensor
    h_lang: T.Tensor
    c_lang: T.Tensor
    step: int = 0

    def select(self, idx):
        idx = np.asarray(idx)
        return DecoderState(*(T.Tensor(t.data[idx]) for t in
                              (self.h_att, self.c_att, self.h_lang, self.c_lang)),
                            step=self.step)


def init_state(batch_size, d_dec, dtype=None):
    dtype = dtype or T.default_dtype()
    z = [T.Tensor(np.zeros((batch_size, d_dec), dtype=dtype)) for _ in range(4)]
    return DecoderState(*z)


@dataclass
class ClipMemory:
    """Step-invariant projections of the encoder states."""
    v_mid: T.Tensor  # [B, T, d_h]
    keys: T.Tensor  # [B, T, d_att]
    mean: T.Tensor  # [B, d_h]


def prepare_memory(v_mid, params):
    if v_mid.ndim != 3 or v_mid.shape[-1] != params["dec.attn_Wv"].shape[0]:
        raise ShapeError(f"clip states {v_mid.shape} do not match decoder input dim")
    return ClipMemory(v_mid, v_mid @ params["dec.attn_Wv"], v_mid.mean(axis=1))


def _lstm(x, h, c, W, b):
    hc = T.lstm_cell(T.concat([x, h], axis=-1) @ W + b, c)
    H = c.shape[1]
    return hc[:, :H], hc[:, H:]


def attend(memory, h_att, params):
    """Additive attention; returns (context [B, d_h], weights [B, T])."""
    B, n_clips, _ = memory.v_mid.shape
    query = h_att @ params["dec.attn_Wh"] + params["dec.attn_b"]
    energy = T.tanh(memory.keys + query.reshape(B, 1, -1))
    scores = (energy @ params["dec.attn_w"]).reshape(B, n_clips)
    alpha = T.softmax_lastdim(scores)
    context = (alpha.reshape(B, 1, n_clips) @ memory.v_mid).reshape(B, -1)
    return context, alpha


def decode_step(memory, prev_emb, state, params, return_attention=False):
    """One decoder step.  ``memory`` may be a ClipMemory or raw [B, T, d_h] states."""
    if not isinstance(memory, ClipMemory):
        memory = prepare_memory(T.as_tensor(memory), params)
    B = memory.v_mid.shape[0]
    if state.h_att.shape != (B, params["dec.attn_Wh"].shape[0]) or prev_emb.shape[0] != B:
        raise ShapeError(
            f"decoder state {state.h_att.shape} / input {prev_emb.shape} "
            f"do not match batch {B}")
    x_att = T.concat([prev_emb, memory.mean, state.h_lang], axis=-1)
    h_att, c_att = _lstm(x_att, state.h_att, state.c_att,
                         params["dec.att_W"], params["dec.att_b"])
    context, alpha = attend(memory, h_att, params)
    h_lang, c_lang = _lstm(T.concat([context, h_att], axis=-1), state.h_lang, state.c_lang,
                           params["dec.lang_W"], params["dec.lang_b"])
    logits = h_lang @ params["dec.out_W"] + params["dec.out_b"]
    new_state = DecoderState(h_att, c_att, h_lang, c_lang, state.step + 1)
    if return_attention:
        return logits, new_state, alpha
    return logits, new_state


def teacher_forced_decode(v_mid, captions, mask, params, tel_prob=1.0, rng=None):
    """Unroll over a caption batch; returns logits [B, L-1, V] predicting tokens 1..L-1.

    With probability ``tel_prob`` (per sample, per step) the gold previous
    token is fed; otherwise the model's own argmax from the previous step.
    """
    if not 0.0 <= tel_prob <= 1.0:
        raise ContractError(f"tel_prob must lie in [0, 1], got {tel_prob}")
    captions = np.asarray(captions, dtype=np.int64)
    B, L = captions.shape
    if L < 2:
        raise ShapeError("captions need at least BOS and one target token")
    if tel_prob < 1.0 and rng is None:
        raise ContractError("scheduled feeding needs an rng")
    memory = prepare_memory(v_mid, params)
    state = init_state(B, params["dec.attn_Wh"].shape[0], v_mid.dtype)
    embed = params["dec.embed"]
    steps = []
    prev = captions[:, 0]
    for t in range(L - 1):
        logits, state = decode_step(memory, T.embedding(embed, prev), state, params)
        steps.append(logits)
        if t + 1 < L - 1:
            gold = captions[:, t + 1]
            if tel_prob >= 1.0:
                prev = gold
            else:
                use_gold = rng.random(B) < tel_prob
                prev = np.where(use_gold, gold, logits.data.argmax(axis=-1))
    return T.stack(steps, axis=1)


def caption_cross_entropy(logits, captions, mask):
    """Mean NLL of tokens 1..L-1 over unmasked positions."""
    captions = np.asarray(captions)
    mask = np.asarray(mask)
    return T.cross_entropy_masked(logits, captions[:, 1:], mask[:, 1:])


# -- inference -------------------------------------------------------------------

def _log_probs(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    lp = z - np.log(np.exp(z).sum(axis=-1, keepdims=True))
    lp[:, list(BANNED)] = -np.inf
    return lp


def greedy_decode(v_mid, params, max_len=20):
    """Batched argmax decoding; returns one id list per video (BOS and EOS stripped)."""
    with T.no_grad():
        v_mid = T.as_tensor(v_mid)
        memory = prepare_memory(v_mid, params)
        B = v_mid.shape[0]
        state = init_state(B, params["dec.attn_Wh"].shape[0], v_mid.dtype)
        prev = np.full(B, BOS, dtype=np.int64)
        out = [[] for _ in range(B)]
        done = np.zeros(B, dtype=bool)
        for _ in range(max_len):
            logits, state = decode_step(memory, T.embedding(params["dec.embed"], prev),
                                        state, params)
            tok = _log_probs(logits.data.astype(np.float64)).argmax(axis=-1)
            for i in np.nonzero(~done)[0]:
                if tok[i] == EOS:
                    done[i] = True
                else:
                    out[i].append(int(tok[i]))
            if done.all():
                break
            prev = tok
    return out


@dataclass
class BeamHypothesis:
    tokens: list
    log_prob: float
    finished: bool = False


def beam_search(step_fn, init, bos, eos, beam_size, max_len, length_norm=False):
    """Generic beam search over a step function.

    ``step_fn(last_tokens, state) -> (log_probs [k, V], state)`` and
    ``state.select(rows)`` reorders a state.  Each step ranks all k*V
    expansions; EOS expansions inside the top ``beam_size`` join the finished
    pool, and the best ``beam_size`` non-EOS expansions form the next beam.
    Returns the best hypothesis among the finished ones and those still open
    when ``max_len`` runs out.
    """
    if beam_size < 1:
        raise ContractError(f"beam_size must be ≥ 1, got {beam_size}")
    if max_len < 1:
        raise ContractError(f"max_len must be ≥ 1, got {max_len}")

    def score(h):
        return h.log_prob / (len(h.tokens) - 1) if length_norm else h.log_prob

    beam = [BeamHypothesis([bos], 0.0)]
    state = init
    finished = []
    for _ in range(max_len):
        last = np.array([h.tokens[-1] for h in beam], dtype=np.int64)
        logp, state = step_fn(last, state)
        base = np.array([h.log_prob for h in beam])
        cand = base[:, None] + logp
        flat = cand.ravel()
        order = np.argsort(-flat, kind="stable")
        V = cand.shape[1]
        keep_rows, new_beam = [], []
        for rank, idx in enumerate(order):
            if not np.isfinite(flat[idx]):
                break
            row, tok = divmod(int(idx), V)
            if tok == eos:
                if rank < beam_size:
                    finished.append(BeamHypothesis(beam[row].tokens + [eos], float(flat[idx]), True))
                continue
            if len(new_beam) < beam_size:
                new_beam.append(BeamHypothesis(beam[row].tokens + [tok], float(flat[idx])))
                keep_rows.append(row)
            if len(new_beam) >= beam_size and rank >= beam_size - 1:
                break
        beam = new_beam
        if not beam:
            break
        state = state.select(keep_rows)
        # log-probs only fall as hypotheses grow, so a finished one that beats
        # every open hypothesis can no longer be overtaken
        if finished and not length_norm:
            if max(h.log_prob for h in finished) >= max(h.log_prob for h in beam):
                break
    # hypotheses still open at max_len are truncated outcomes and compete too;
    # after an early stop none of them can win
    pool = finished + beam
    best = pool[0]
    for h in pool[1:]:
        if score(h) > score(best):
            best = h
    return best


def beam_search_decode(v_mid, params, beam_size=5, max_len=20, length_norm=False):
    """Beam-decode one video (v_mid [1, T, d_h] or [T, d_h]); returns ids without BOS/EOS."""
    if beam_size < 1:
        raise ContractError(f"beam_size must be ≥ 1, got {beam_size}")
    v_mid = T.as_tensor(v_mid)
    if v_mid.ndim == 2:
        v_mid = T.Tensor(v_mid.data[None])
    if v_mid.shape[0] != 1:
        raise ShapeError("beam search decodes one video at a time")
    with T.no_grad():
        memory = prepare_memory(v_mid, params)
        cache = {}

        def step_fn(last, state):
            k = len(last)
            if k not in cache:
                cache[k] = ClipMemory(*(T.Tensor(np.repeat(x.data, k, axis=0))
                                        for x in (memory.v_mid, memory.keys, memory.mean)))
            logits, new_state = decode_step(cache[k], T.embedding(params["dec.embed"], last),
                                            state, params)
            return _log_probs(logits.data.astype(np.float64)), new_state

        init = init_state(1, params["dec.attn_Wh"].shape[0], v_mid.dtype)
        best = beam_search(step_fn, init, BOS, EOS, beam_size, max_len, length_norm)
    return [t for t in best.tokens[1:] if t != EOS]
