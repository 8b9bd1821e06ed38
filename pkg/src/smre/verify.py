"""Finite-difference suite over every differentiable operation and the full loss."""
from __future__ import annotations

import numpy as np

from . import tensor as T
from .config import Dims, TrainConfig
from .data import CorpusSpec, generate_corpus
from .decoder import decode_step, init_state, prepare_memory
from .encoders import Vocabulary, make_batch, RESERVED
from .gradcheck import finite_diff_check
from .params import init_params
from .sst_losses import contrastive_loss_intra, triplet_loss_inter
from .config import SSTConfig
from .training import compute_losses

TINY_DIMS = Dims(d_v=8, d_h=5, d_s=4, d_t=3, d_e=3, d_dec=4, d_att=3, clips=26)


def _leaves(rng, **shapes):
    return {k: T.Tensor(rng.normal(size=s), requires_grad=True) for k, s in shapes.items()}


def _weighted(out, w):
    """Scalarise an op output against fixed random weights (exercises every entry)."""
    return (out * T.Tensor(w)).sum()


def op_cases(rng):
    """(name, leaves, f) triples; f maps the leaf dict to a scalar Tensor."""
    cases = []

    def add(name, leaves, fn, out_shape):
        w = rng.normal(size=out_shape)
        cases.append((name, leaves, lambda p: _weighted(fn(p), w)))

    add("add", _leaves(rng, a=(3, 4), b=(4,)), lambda p: p["a"] + p["b"], (3, 4))
    add("sub", _leaves(rng, a=(3, 4), b=(3, 1)), lambda p: p["a"] - p["b"], (3, 4))
    add("mul", _leaves(rng, a=(2, 3, 4), b=(3, 4)), lambda p: p["a"] * p["b"], (2, 3, 4))
    pos = {"a": T.Tensor(rng.normal(size=(3, 3)), requires_grad=True),
           "b": T.Tensor(rng.uniform(0.5, 2.0, size=(3, 3)), requires_grad=True)}
    add("div", pos, lambda p: p["a"] / p["b"], (3, 3))
    add("matmul", _leaves(rng, a=(3, 5), b=(5, 2)), lambda p: p["a"] @ p["b"], (3, 2))
    add("matmul_batched", _leaves(rng, a=(2, 3, 4), b=(4, 5)), lambda p: p["a"] @ p["b"], (2, 3, 5))
    add("sum_axis", _leaves(rng, a=(4, 3, 2)), lambda p: p["a"].sum(axis=1), (4, 2))
    add("mean_axis", _leaves(rng, a=(4, 3, 2)), lambda p: p["a"].mean(axis=(0, 2)), (3,))
    add("exp", _leaves(rng, a=(3, 3)), lambda p: T.exp(p["a"]), (3, 3))
    logs = {"a": T.Tensor(rng.uniform(0.5, 3.0, size=(4,)), requires_grad=True)}
    add("log", logs, lambda p: T.log(p["a"]), (4,))
    add("tanh", _leaves(rng, a=(3, 4)), lambda p: T.tanh(p["a"]), (3, 4))
    add("sigmoid", _leaves(rng, a=(3, 4)), lambda p: T.sigmoid(p["a"]), (3, 4))
    away = rng.normal(size=(5, 3))
    away[np.abs(away) < 0.1] = 0.5
    add("relu", {"a": T.Tensor(away, requires_grad=True)}, lambda p: T.relu(p["a"]), (5, 3))
    add("power", {"a": T.Tensor(rng.uniform(0.5, 2.0, size=(3,)), requires_grad=True)},
        lambda p: p["a"] ** 3, (3,))
    add("reshape_transpose", _leaves(rng, a=(2, 3, 4)),
        lambda p: p["a"].reshape(6, 4).T, (4, 6))
    add("getitem_fancy", _leaves(rng, a=(4, 4)),
        lambda p: p["a"][np.array([0, 1, 1, 3]), np.array([2, 0, 0, 3])], (4,))
    add("getitem_slice", _leaves(rng, a=(4, 6)), lambda p: p["a"][:, 1:4], (4, 3))
    add("embedding", _leaves(rng, a=(6, 3)),
        lambda p: T.embedding(p["a"], np.array([[0, 2], [2, 5]])), (2, 2, 3))
    add("concat", _leaves(rng, a=(2, 3), b=(2, 2)), lambda p: T.concat([p["a"], p["b"]]), (2, 5))
    add("stack", _leaves(rng, a=(2, 3), b=(2, 3)), lambda p: T.stack([p["a"], p["b"]], 1), (2, 2, 3))
    add("softmax_lastdim", _leaves(rng, a=(3, 5)), lambda p: T.softmax_lastdim(p["a"], 2.5), (3, 5))
    add("log_softmax_lastdim", _leaves(rng, a=(3, 5)), lambda p: T.log_softmax_lastdim(p["a"]), (3, 5))
    add("cosine_similarity_matrix", _leaves(rng, a=(4, 6), b=(4, 6)),
        lambda p: T.cosine_similarity_matrix(p["a"], p["b"]), (4, 4))
    add("paired_cosine", _leaves(rng, a=(4, 6), b=(4, 6)),
        lambda p: T.paired_cosine(p["a"], p["b"]), (4,))
    lstm = {"z": T.Tensor(rng.normal(size=(3, 8)), requires_grad=True),
            "c": T.Tensor(rng.normal(size=(3, 2)), requires_grad=True)}
    add("lstm_cell", lstm, lambda p: T.lstm_cell(p["z"], p["c"]), (3, 4))
    add("astype", _leaves(rng, a=(3,)), lambda p: T.astype(p["a"], np.float64) * 2.0, (3,))

    targets = rng.integers(0, 5, size=(2, 3))
    mask = np.array([[1, 1, 0], [1, 1, 1]])
    cases.append(("cross_entropy", _leaves(rng, a=(2, 3, 5)),
                  lambda p: T.cross_entropy_masked(p["a"], targets, mask)))
    pick = 2
    cases.append(("softmax_pick", _leaves(rng, a=(5,)),
                  lambda p: T.softmax_lastdim(p["a"])[pick]))
    return cases


def loss_cases(rng):
    cfg = SSTConfig()
    cases = []

    def triplet(p):
        return triplet_loss_inter(p["v"], p["t"], cfg)

    # random 3-pair batches until every hinge sits away from its kink
    while True:
        leaves = _leaves(rng, v=(3, 4), t=(3, 4))
        sim = T.cosine_similarity_matrix(leaves["v"], leaves["t"]).data
        pos = np.diag(sim)
        off = sim + np.diag(np.full(3, -np.inf))
        args = np.concatenate([off.max(1) - pos + 0.2, off.max(0) - pos + 0.2])
        gaps = np.sort(off, axis=1)[:, -1] - np.sort(off, axis=1)[:, -2]
        gaps_c = np.sort(off, axis=0)[-1] - np.sort(off, axis=0)[-2]
        if (np.abs(args) > 1e-3).all() and (args > 0).any() and min(gaps.min(), gaps_c.min()) > 1e-3:
            break
    cases.append(("triplet_loss_inter", leaves, triplet))

    for y in (0.0, 0.8, 1.0):
        vo = rng.normal(size=(3, 4))
        # near-identical pairs keep D inside the margin so the hinge is active
        vs = vo + 0.2 * rng.normal(size=(3, 4))
        leaves = {"vo": T.Tensor(vo, requires_grad=True), "vs": T.Tensor(vs, requires_grad=True)}
        ycfg = SSTConfig(y_signal=y)
        cases.append((f"contrastive_loss_intra[Y={y}]", leaves,
                      lambda p, c=ycfg: contrastive_loss_intra(p["vo"], p["vs"], c)))
    return cases


def decoder_case(rng, dims=TINY_DIMS, vocab_size=7):
    params = init_params(dims, vocab_size, seed=int(rng.integers(1 << 30)), dtype=np.float64)
    v_mid = rng.normal(size=(2, 3, dims.d_h))
    w = rng.normal(size=(2, vocab_size))
    leaves = {k: params[k] for k in params.names() if k.startswith("dec.")}
    leaves["v_mid"] = T.Tensor(v_mid, requires_grad=True)
    emb = T.Tensor(rng.normal(size=(2, dims.d_e)), requires_grad=True)
    leaves["prev_emb"] = emb
    h0 = rng.normal(scale=0.5, size=(4, 2, dims.d_dec))

    def f(p):
        state = init_state(2, dims.d_dec, np.float64)
        state.h_att, state.c_att, state.h_lang, state.c_lang = (T.Tensor(h) for h in h0)
        memory = prepare_memory(p["v_mid"], params)
        logits, state = decode_step(memory, p["prev_emb"], state, params)
        logits2, _ = decode_step(memory, p["prev_emb"] * 0.5, state, params)
        return _weighted(logits, w) + _weighted(logits2, w)

    return "decode_step(x2)", leaves, f


def composite_case(rng, seed=0, batch_size=4):
    """The full weighted training loss on a B=4 synthetic minibatch, float64."""
    spec = CorpusSpec(n_videos=batch_size, d_v=TINY_DIMS.d_v, n_subjects=2, n_verbs=2,
                      n_objects=2, n_scenes=2, captions_per_video=1, noise_sigma=1.0,
                      seed=seed)
    recs = generate_corpus(spec)
    words = sorted({w for r in recs for c in r.captions for w in c})
    vocab = Vocabulary(list(RESERVED) + words[:8], min_count=1)  # leaves some UNK
    batch = make_batch([r.features for r in recs], [r.captions[0][:4] for r in recs], vocab)
    cfg = TrainConfig(dims=TINY_DIMS, lambda1=0.7, lambda2=1.3, lambda3=0.9, tel_prob=1.0)
    cfg = cfg.replace(**{"sst.y_signal": 0.8, "support.theta_scale": 3.0, "sst.alpha": 0.5})
    params = init_params(TINY_DIMS, len(vocab), seed=seed, dtype=np.float64)
    for _, p in params.items():
        # biases start at zero; randomise so they are exercised too
        if p.ndim == 1:
            p.data = p.data + rng.normal(scale=0.1, size=p.shape)

    def f(p):
        overall, _ = compute_losses(batch, p, cfg)
        return overall

    return "overall_loss(B=4)", params, f


def run_suite(seed=0, h=1e-5, tol=1e-4, oracle_dtype=np.longdouble):
    """Returns a list of (name, max relative error, passed)."""
    rng = np.random.default_rng(seed)
    results = []
    with T.precision(np.float64):
        cases = op_cases(rng) + loss_cases(rng) + [decoder_case(rng), composite_case(rng, seed)]
        for name, leaves, f in cases:
            report = finite_diff_check(f, leaves, h, oracle_dtype)
            results.append((name, report.max_error, report.passed(tol)))
    return results
