"""Loss composition, the training loop, ablation matrix and Y sweep."""
from __future__ import annotations

import json
import logging
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from . import instrument
from . import tensor as T
from .checkpoint import load_checkpoint, save_checkpoint
from .config import save_config
from .data import split
from .decoder import beam_search_decode, caption_cross_entropy, greedy_decode, teacher_forced_decode
from .encoders import build_vocabulary, encode_batch, encode_video, make_batch
from .errors import ContractError, NonFiniteError
from .metrics import evaluate_captions
from .optim import AdamState, adam_step, clip_global_norm, collect_grads
from .params import init_params
from .sst_losses import contrastive_loss_intra, triplet_loss_inter
from .support_set import forward_support_branch

log = logging.getLogger(__name__)

COMPONENTS = ("l_inter", "l_intra", "l_sup_cap", "l_ori_cap")


@dataclass
class LossReport:
    l_ori_cap: float
    l_sup_cap: float | None
    l_inter: float | None
    l_intra: float | None
    l_overall: float
    epoch: int = 0
    step: int = 0

    def recomposed(self, cfg):
        """The weighted sum recomputed from the logged components."""
        total = self.l_ori_cap
        for lam, val in ((cfg.lambda1, self.l_inter), (cfg.lambda2, self.l_intra),
                         (cfg.lambda3, self.l_sup_cap)):
            if val is not None:
                total += lam * val
        return total

    def to_json(self):
        return json.dumps(asdict(self), sort_keys=True)


def enabled_components(cfg):
    on = cfg.support.enabled
    return {
        "l_inter": on and cfg.use_inter,
        "l_intra": on and cfg.use_intra,
        "l_sup_cap": on and cfg.use_sup_cap,
        "l_ori_cap": True,
    }


def overall_loss(components, cfg):
    """lambda1*l_inter + lambda2*l_intra + lambda3*l_sup_cap + l_ori_cap, in float64.

    ``components`` maps names from COMPONENTS to scalar Tensors or floats.
    Disabled branches contribute exactly zero and may be absent.
    """
    weights = {"l_inter": cfg.lambda1, "l_intra": cfg.lambda2, "l_sup_cap": cfg.lambda3,
               "l_ori_cap": 1.0}
    total = None
    for name, on in enabled_components(cfg).items():
        if not on:
            continue
        val = components.get(name)
        if val is None:
            raise ContractError(f"enabled loss component {name} is missing")
        term = T.as_tensor(val, dtype=None if isinstance(val, T.Tensor) else np.float64)
        if np.finfo(term.dtype).bits < 64:
            term = T.astype(term, np.float64)
        term = term * weights[name]
        total = term if total is None else total + term
    return total


def compute_losses(batch, params, cfg, rng_ori=None, rng_sup=None):
    """Forward pass of both branches; returns (overall, {component: Tensor})."""
    on = enabled_components(cfg)
    encoded = encode_batch(batch, params, cfg, with_text=cfg.support.enabled)
    if cfg.support.enabled:
        encoded = forward_support_branch(batch, params, cfg, encoded=encoded, training=True)
    comps = {}
    logits = teacher_forced_decode(encoded.vo_mid, batch.captions, batch.caption_mask,
                                   params, cfg.tel_prob, rng_ori)
    comps["l_ori_cap"] = caption_cross_entropy(logits, batch.captions, batch.caption_mask)
    if on["l_sup_cap"]:
        logits_s = teacher_forced_decode(encoded.vs_mid, batch.captions, batch.caption_mask,
                                         params, cfg.tel_prob, rng_sup)
        comps["l_sup_cap"] = caption_cross_entropy(logits_s, batch.captions, batch.caption_mask)
    if on["l_inter"]:
        comps["l_inter"] = triplet_loss_inter(encoded.vo_pooled, encoded.t_gt, cfg.sst)
    if on["l_intra"]:
        comps["l_intra"] = contrastive_loss_intra(encoded.vo_pooled, encoded.vs_pooled, cfg.sst)
    return overall_loss(comps, cfg), comps


def make_report(overall, comps, epoch=0, step=0):
    def val(name):
        return float(comps[name].data) if name in comps else None

    return LossReport(val("l_ori_cap"), val("l_sup_cap"), val("l_inter"), val("l_intra"),
                      float(overall.data), epoch, step)


def train_step(batch, params, opt_state, cfg, rng_ori=None, rng_sup=None, epoch=0, step=0,
               grad_hook=None):
    params.zero_grad()
    try:
        overall, comps = compute_losses(batch, params, cfg, rng_ori, rng_sup)
    except NonFiniteError as exc:
        raise NonFiniteError(f"epoch {epoch} step {step}: {exc}") from exc
    report = make_report(overall, comps, epoch, step)
    T.backward(overall)
    grads = collect_grads(params)
    if grad_hook is not None:
        grads = grad_hook(grads)
    grads, _ = clip_global_norm(grads, cfg.clip_norm)
    adam_step(params, grads, opt_state, cfg.lr)
    return report


@dataclass
class CaptionPairs:
    """Every (video, caption) pair of a split, with stacked features."""
    features: np.ndarray  # [N, T, d_v]
    pairs: list  # (video row, token list)
    video_ids: list

    @classmethod
    def from_records(cls, records):
        feats = np.stack([np.asarray(r.features) for r in records]) if records else None
        pairs = [(i, cap) for i, r in enumerate(records) for cap in r.captions]
        return cls(feats, pairs, [r.video_id for r in records])

    def __len__(self):
        return len(self.pairs)


def _epoch_rngs(cfg, epoch, step):
    seq = np.random.SeedSequence([cfg.seed, epoch, step])
    a, b = seq.spawn(2)
    return np.random.default_rng(a), np.random.default_rng(b)


def train_epoch(dataset, params, opt_state, cfg, vocab, epoch=0, on_step=None):
    """One seeded-shuffle pass over the pairs; returns (params, opt_state, reports)."""
    order = np.random.default_rng([cfg.seed, epoch]).permutation(len(dataset))
    reports = []
    with T.deterministic_reductions(cfg.determinism or None):
        for step, lo in enumerate(range(0, len(order), cfg.batch_size)):
            idx = order[lo:lo + cfg.batch_size]
            rows = [dataset.pairs[i][0] for i in idx]
            batch = make_batch(dataset.features[rows], [dataset.pairs[i][1] for i in idx],
                               vocab, clips=cfg.dims.clips)
            rng_ori, rng_sup = _epoch_rngs(cfg, epoch, step)
            rep = train_step(batch, params, opt_state, cfg, rng_ori, rng_sup, epoch, step)
            reports.append(rep)
            if on_step is not None:
                on_step(rep)
    return params, opt_state, reports


# -- inference -------------------------------------------------------------------

def decode_records(records, params, cfg, vocab, beam_size=None, greedy=False):
    """Caption each record from its video features alone; returns token lists."""
    beam_size = cfg.beam_size if beam_size is None else beam_size
    dtype = params["enc.W"].dtype
    out = []
    with T.no_grad():
        if greedy:
            feats = np.stack([np.asarray(r.features) for r in records]).astype(dtype)
            v_mid = encode_video(T.Tensor(feats), params)
            ids = greedy_decode(v_mid, params, cfg.max_len)
            return [vocab.decode(x) for x in ids]
        for r in records:
            v_mid = encode_video(T.Tensor(np.asarray(r.features, dtype=dtype)[None]), params)
            ids = beam_search_decode(v_mid, params, beam_size, cfg.max_len, cfg.length_norm)
            out.append(vocab.decode(ids))
    return out


def evaluate(records, params, cfg, vocab, beam_size=None, greedy=False):
    hyps = decode_records(records, params, cfg, vocab, beam_size, greedy)
    return evaluate_captions(hyps, [r.captions for r in records], [r.video_id for r in records])


# -- full runs -------------------------------------------------------------------

@dataclass
class TrainResult:
    params: object  # selected by validation BLEU-4 when enabled, else last
    last_params: object
    opt_state: AdamState
    vocab: object
    reports: list = field(default_factory=list)
    epochs: list = field(default_factory=list)  # per-epoch summaries
    initial_digest: str = ""


def _epoch_summary(epoch, reports, val_report):
    def mean(name):
        vals = [getattr(r, name) for r in reports if getattr(r, name) is not None]
        return float(np.mean(vals)) if vals else None

    out = {"epoch": epoch}
    for name in COMPONENTS + ("l_overall",):
        out[name] = mean(name)
    if val_report is not None:
        out.update({f"val_{k}": v for k, v in val_report.as_dict().items()
                    if k in ("bleu4", "rouge_l", "cider")})
    return out


def train(records, cfg, out_dir=None, vocab=None, resume=None, params=None):
    """Train on the ``train`` split, selecting the epoch with the best val BLEU-4.

    With ``out_dir`` set, writes ``last.ckpt`` every epoch, ``best.ckpt``,
    ``losses.jsonl`` (one LossReport per step) and ``config.cfg``.
    ``resume`` is a checkpoint path written by an earlier run.
    """
    train_recs = split(records, "train")
    val_recs = split(records, "val")
    if not train_recs:
        raise ContractError("no training records")
    start_epoch = 0
    if resume is not None:
        ck = load_checkpoint(resume)
        vocab, params, opt = ck.vocab, ck.params, ck.opt_state
        start_epoch = int(ck.meta.get("epoch", -1)) + 1
        best_bleu = ck.meta.get("best_bleu")
    else:
        if vocab is None:
            vocab = build_vocabulary([c for r in train_recs for c in r.captions], cfg.min_count)
        if params is None:
            params = init_params(cfg.dims, len(vocab), seed=cfg.seed)
        opt = AdamState.zeros(params)
        best_bleu = None
    dataset = CaptionPairs.from_records(train_recs)
    result = TrainResult(params, params, opt, vocab, initial_digest=params.digest())
    best = params.copy()

    log_fh = None
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        save_config(cfg, os.path.join(out_dir, "config.cfg"))
        log_fh = open(os.path.join(out_dir, "losses.jsonl"), "a" if resume else "w",
                      encoding="utf-8")
    try:
        for epoch in range(start_epoch, cfg.epochs):
            def on_step(rep):
                if log_fh is not None:
                    log_fh.write(rep.to_json() + "\n")

            _, _, reps = train_epoch(dataset, params, opt, cfg, vocab, epoch, on_step)
            result.reports.extend(reps)
            val_report = None
            if cfg.select_by_val and val_recs:
                val_report = evaluate(val_recs, params, cfg, vocab)
                if best_bleu is None or val_report.bleu4 > best_bleu:
                    best_bleu = val_report.bleu4
                    best = params.copy()
            summary = _epoch_summary(epoch, reps, val_report)
            result.epochs.append(summary)
            log.info("epoch %d: %s", epoch, summary)
            if out_dir is not None:
                meta = {"epoch": epoch, "best_bleu": best_bleu}
                save_checkpoint(params, opt, cfg, os.path.join(out_dir, "last.ckpt"), vocab, meta)
                if not (cfg.select_by_val and val_recs):
                    best = params
                save_checkpoint(best, None, cfg, os.path.join(out_dir, "best.ckpt"), vocab, meta)
    finally:
        if log_fh is not None:
            log_fh.close()
    result.params = best if (cfg.select_by_val and val_recs) else params
    result.last_params = params
    result.opt_state = opt
    return result


ABLATION_ROWS = (
    ("baseline", {"support.enabled": False, "use_sup_cap": False, "use_inter": False,
                  "use_intra": False}),
    ("l_sup", {"support.enabled": True, "use_sup_cap": True, "use_inter": False,
               "use_intra": False}),
    ("+l_inter", {"support.enabled": True, "use_sup_cap": True, "use_inter": True,
                  "use_intra": False}),
    ("+l_intra", {"support.enabled": True, "use_sup_cap": True, "use_inter": False,
                  "use_intra": True}),
    ("l_overall", {"support.enabled": True, "use_sup_cap": True, "use_inter": True,
                   "use_intra": True}),
)


def _row(label, cfg, res, records, eval_split):
    recs = split(records, eval_split) or split(records, "train")
    metrics = evaluate(recs, res.params, cfg, res.vocab)
    last = res.reports[-1]
    return {
        "setting": label,
        "support": cfg.support.enabled,
        "sup_cap": last.l_sup_cap is not None,
        "inter": last.l_inter is not None,
        "intra": last.l_intra is not None,
        "y_signal": cfg.sst.y_signal,
        "l_ori_cap": res.epochs[-1]["l_ori_cap"],
        "l_sup_cap": res.epochs[-1]["l_sup_cap"],
        "l_inter": res.epochs[-1]["l_inter"],
        "l_intra": res.epochs[-1]["l_intra"],
        "l_overall": res.epochs[-1]["l_overall"],
        "bleu4": metrics.bleu4,
        "rouge_l": metrics.rouge_l,
        "cider": metrics.cider,
        "initial_digest": res.initial_digest,
        "counters": instrument.snapshot(),
    }


def run_ablation(records, base_cfg, eval_split="test"):
    """The five loss settings: baseline, l_sup, +l_inter, +l_intra, l_overall."""
    rows = []
    for label, changes in ABLATION_ROWS:
        cfg = base_cfg.replace(**changes)
        instrument.reset()
        res = train(records, cfg)
        rows.append(_row(label, cfg, res, records, eval_split))
    return rows


Y_GRID = (0.0, 0.2, 0.5, 0.8, 1.0)


def sweep_y(records, cfg, y_values=Y_GRID, eval_split="test"):
    """One full training per control-signal value, everything else fixed."""
    base = cfg.replace(**{"support.enabled": True, "use_intra": True})
    rows = []
    for y in y_values:
        row_cfg = base.replace(**{"sst.y_signal": float(y)})
        instrument.reset()
        res = train(records, row_cfg)
        rows.append(_row(f"Y={y:.1f}", row_cfg, res, records, eval_split))
    return rows


TABLE_COLUMNS = ("setting", "l_ori_cap", "l_overall", "bleu4", "rouge_l", "cider")


def format_table(rows, columns=TABLE_COLUMNS):
    def cell(v):
        if v is None:
            return "-"
        if isinstance(v, float):
            return f"{v:.4f}"
        return str(v)

    cells = [[cell(r.get(c)) for c in columns] for r in rows]
    widths = [max(len(c), *(len(row[i]) for row in cells)) for i, c in enumerate(columns)]
    lines = ["  ".join(c.ljust(w) for c, w in zip(columns, widths))]
    lines += ["  ".join(v.ljust(w) for v, w in zip(row, widths)) for row in cells]
    return "\n".join(lines)
