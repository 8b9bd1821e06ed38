"""Caption metrics: corpus BLEU-4, ROUGE-L and CIDEr.

Inputs are pre-tokenised: ``hypotheses`` is a list of token lists and
``references`` a parallel list of lists of token lists (a string is split on
whitespace).
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import ContractError

BLEU_SMOOTH = 1e-9


def _tok(x):
    return x.split() if isinstance(x, str) else list(x)


def _prepare(hypotheses, references):
    hyps = [_tok(h) for h in hypotheses]
    refs = [[_tok(r) for r in rs] for rs in references]
    if not hyps:
        raise ContractError("empty hypothesis list")
    if len(hyps) != len(refs):
        raise ContractError(f"{len(hyps)} hypotheses but {len(refs)} reference sets")
    for i, rs in enumerate(refs):
        if not rs:
            raise ContractError(f"hypothesis {i} has no references")
    return hyps, refs


def ngrams(tokens, n):
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu4_details(hypotheses, references, max_n=4):
    """Corpus BLEU with clipped counts pooled over the corpus.

    Brevity penalty uses, per sentence, the reference length closest to the
    hypothesis (shorter on ties).  An order with zero matches gets
    ``BLEU_SMOOTH`` added to its match count, and ``smoothed`` is set.
    """
    hyps, refs = _prepare(hypotheses, references)
    matches = [0] * max_n
    totals = [0] * max_n
    hyp_len = ref_len = 0
    for h, rs in zip(hyps, refs):
        hyp_len += len(h)
        ref_len += min((len(r) for r in rs), key=lambda L: (abs(L - len(h)), L))
        for n in range(1, max_n + 1):
            counts = ngrams(h, n)
            max_ref = Counter()
            for r in rs:
                for g, c in ngrams(r, n).items():
                    max_ref[g] = max(max_ref[g], c)
            matches[n - 1] += sum(min(c, max_ref[g]) for g, c in counts.items())
            totals[n - 1] += max(len(h) - n + 1, 0)
    smoothed = False
    log_p = 0.0
    for m, t in zip(matches, totals):
        if m == 0:
            smoothed = True
            m = BLEU_SMOOTH
        if t == 0:
            return {"bleu4": 0.0, "precisions": [0.0] * max_n, "bp": 0.0, "smoothed": True}
        log_p += math.log(m / t) / max_n
    bp = 1.0 if hyp_len > ref_len else (math.exp(1 - ref_len / hyp_len) if hyp_len else 0.0)
    return {
        "bleu4": bp * math.exp(log_p),
        "precisions": [m / t for m, t in zip(matches, totals)],
        "bp": bp,
        "smoothed": smoothed,
        "hyp_len": hyp_len,
        "ref_len": ref_len,
    }


def bleu4(hypotheses, references):
    return bleu4_details(hypotheses, references)["bleu4"]


def lcs_length(a, b):
    """Longest common subsequence length of two token lists."""
    vocab = {}
    ia = np.array([vocab.setdefault(w, len(vocab)) for w in a], dtype=np.int64)
    ib = np.array([vocab.setdefault(w, len(vocab)) for w in b], dtype=np.int64)
    return kernels.lcs_length(ia, ib)


def rouge_l_sentence(hyp, refs, beta=1.2):
    best = 0.0
    for r in refs:
        lcs = lcs_length(hyp, r)
        if lcs == 0:
            continue
        p = lcs / len(hyp)
        rec = lcs / len(r)
        f = (1 + beta ** 2) * p * rec / (rec + beta ** 2 * p)
        best = max(best, f)
    return best


def rouge_l(hypotheses, references, beta=1.2):
    """LCS F-measure, best reference per sentence, averaged over the corpus."""
    hyps, refs = _prepare(hypotheses, references)
    return float(np.mean([rouge_l_sentence(h, rs, beta) for h, rs in zip(hyps, refs)]))


def _tfidf(counts, df, log_n):
    return {g: tf * (log_n - math.log(max(1.0, df.get(g, 0.0)))) for g, tf in counts.items()}


def _cos(a, b):
    na = math.sqrt(sum(v * v for v in a.values()))
    nb = math.sqrt(sum(v * v for v in b.values()))
    if na == 0 or nb == 0:
        return 0.0
    return sum(v * b.get(g, 0.0) for g, v in a.items()) / (na * nb)


def cider_scores(hypotheses, references, max_n=4):
    """Per-sentence CIDEr (no length penalty or clipping; scaled by 10).

    Document frequency counts the reference sets containing an n-gram.
    """
    hyps, refs = _prepare(hypotheses, references)
    df = Counter()
    for rs in refs:
        seen = set()
        for r in rs:
            for n in range(1, max_n + 1):
                seen.update(ngrams(r, n))
        df.update(seen)
    log_n = math.log(float(len(refs)))
    scores = []
    for h, rs in zip(hyps, refs):
        per_n = []
        for n in range(1, max_n + 1):
            vh = _tfidf(ngrams(h, n), df, log_n)
            sims = [_cos(vh, _tfidf(ngrams(r, n), df, log_n)) for r in rs]
            per_n.append(sum(sims) / len(sims))
        scores.append(10.0 * sum(per_n) / max_n)
    return scores


def cider(hypotheses, references):
    return float(np.mean(cider_scores(hypotheses, references)))


@dataclass
class MetricReport:
    bleu4: float
    rouge_l: float
    cider: float
    per_video: dict = field(default_factory=dict)
    bleu_smoothed: bool = False
    meteor: str = "unavailable"

    def as_dict(self):
        return {"bleu4": self.bleu4, "rouge_l": self.rouge_l, "cider": self.cider,
                "meteor": self.meteor, "bleu_smoothed": self.bleu_smoothed}


def evaluate_captions(hypotheses, references, video_ids=None):
    hyps, refs = _prepare(hypotheses, references)
    details = bleu4_details(hyps, refs)
    cid = cider_scores(hyps, refs)
    per_video = {}
    if video_ids is not None:
        for vid, h, rs, c in zip(video_ids, hyps, refs, cid):
            per_video[vid] = {"bleu4": bleu4([h], [rs]), "rouge_l": rouge_l_sentence(h, rs),
                              "cider": c}
    return MetricReport(details["bleu4"], rouge_l(hyps, refs), float(np.mean(cid)),
                        per_video, details["smoothed"])
