import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from smre.errors import ContractError
from smre.metrics import (BLEU_SMOOTH, bleu4, bleu4_details, cider, cider_scores,
                          evaluate_captions, lcs_length, rouge_l, rouge_l_sentence)

sentence = st.lists(st.sampled_from("abcde"), min_size=1, max_size=8)
corpus = st.lists(st.tuples(sentence, st.lists(sentence, min_size=1, max_size=3)),
                  min_size=1, max_size=6)


def _grams(toks, n):
    return [tuple(toks[i:i + n]) for i in range(len(toks) - n + 1)]


def bleu_reference(hyps, refs):
    """Corpus BLEU-4 written out longhand."""
    num, den = [0] * 4, [0] * 4
    c = r = 0
    for h, rs in zip(hyps, refs):
        c += len(h)
        lens = sorted(len(x) for x in rs)
        r += min(lens, key=lambda L: (abs(L - len(h)), L))
        for n in range(1, 5):
            hg = _grams(h, n)
            for g in set(hg):
                num[n - 1] += min(hg.count(g), max(_grams(x, n).count(g) for x in rs))
            den[n - 1] += len(hg)
    if 0 in den:
        return 0.0
    logs = [math.log((m if m else BLEU_SMOOTH) / d) for m, d in zip(num, den)]
    bp = 1.0 if c > r else math.exp(1 - r / c)
    return bp * math.exp(sum(logs) / 4)


def cider_reference(hyps, refs):
    """CIDEr via dense tf-idf vectors over a global n-gram index."""
    N = len(refs)
    scores = np.zeros(len(hyps))
    for n in range(1, 5):
        vocab = sorted({g for rs in refs for x in rs for g in _grams(x, n)} |
                       {g for h in hyps for g in _grams(h, n)})
        index = {g: i for i, g in enumerate(vocab)}
        df = np.zeros(len(vocab))
        for rs in refs:
            for g in {g for x in rs for g in _grams(x, n)}:
                df[index[g]] += 1
        idf = math.log(N) - np.log(np.maximum(df, 1.0))

        def vec(toks):
            v = np.zeros(len(vocab))
            for g in _grams(toks, n):
                v[index[g]] += 1
            return v * idf

        for i, (h, rs) in enumerate(zip(hyps, refs)):
            vh = vec(h)
            sims = []
            for x in rs:
                vr = vec(x)
                d = np.linalg.norm(vh) * np.linalg.norm(vr)
                sims.append(vh @ vr / d if d > 0 else 0.0)
            scores[i] += np.mean(sims) / 4
    return 10 * scores


class TestBleu:
    def test_hand_example(self):
        hyp = "the cat sat on the mat".split()
        ref = "the cat is on the mat".split()
        expected = math.exp((math.log(5 / 6) + math.log(3 / 5) + math.log(1 / 4)
                             + math.log(BLEU_SMOOTH / 3)) / 4)
        d = bleu4_details([hyp], [[ref]])
        assert d["bleu4"] == pytest.approx(expected, rel=1e-12)
        assert d["smoothed"] and d["bp"] == 1.0

    def test_brevity_penalty(self):
        hyp = "a b c d".split()
        ref = "a b c d e f".split()
        d = bleu4_details([hyp], [[ref]])
        assert d["bp"] == pytest.approx(math.exp(1 - 6 / 4))
        assert not d["smoothed"]

    def test_clipping(self):
        d = bleu4_details([["the"] * 7], [[["the", "cat"]]])
        assert d["precisions"][0] == pytest.approx(1 / 7)

    @given(corpus)
    def test_against_longhand(self, pairs):
        hyps, refs = [p[0] for p in pairs], [p[1] for p in pairs]
        assert bleu4(hyps, refs) == pytest.approx(bleu_reference(hyps, refs), rel=1e-9, abs=1e-15)

    def test_string_input(self):
        assert bleu4(["a b c d e"], [["a b c d e"]]) == pytest.approx(1.0)


class TestRouge:
    def test_hand_example(self):
        assert rouge_l_sentence("a b c d".split(), ["a c d e".split()]) == pytest.approx(0.75)

    def test_best_reference(self):
        assert rouge_l_sentence(["x", "y"], [["z"], ["x", "y"]]) == pytest.approx(1.0)

    def test_disjoint(self):
        assert rouge_l([["a"]], [[["b"]]]) == 0.0

    def test_lcs(self):
        assert lcs_length("abcbdab", "bdcaba") == 4


class TestCider:
    @given(corpus)
    def test_against_dense_vectors(self, pairs):
        hyps, refs = [p[0] for p in pairs], [p[1] for p in pairs]
        np.testing.assert_allclose(cider_scores(hyps, refs), cider_reference(hyps, refs),
                                   atol=1e-9)

    def test_singleton_corpus_has_zero_idf(self):
        assert cider(["a b"], [["a b"]]) == 0.0

    def test_exact_match_beats_mismatch(self):
        refs = [[["a", "man", "runs"]], [["a", "dog", "sits"]], [["the", "cat", "eats"]]]
        good = cider([r[0] for r in refs], refs)
        bad = cider([["zz"], ["zz"], ["zz"]], refs)
        assert good > 0 and bad == 0.0


@given(corpus)
def test_self_evaluation_is_perfect(pairs):
    refs = [p[1] for p in pairs]
    hyps = [rs[0] for rs in refs]
    if min(len(h) for h in hyps) >= 4:
        assert bleu4(hyps, refs) == pytest.approx(1.0)
    assert rouge_l(hyps, refs) == pytest.approx(1.0)


@given(corpus, st.randoms())
def test_permutation_invariant(pairs, rnd):
    hyps, refs = [p[0] for p in pairs], [p[1] for p in pairs]
    order = list(range(len(pairs)))
    rnd.shuffle(order)
    a = evaluate_captions(hyps, refs)
    b = evaluate_captions([hyps[i] for i in order], [refs[i] for i in order])
    assert a.bleu4 == pytest.approx(b.bleu4, rel=1e-12, abs=1e-300)
    assert a.rouge_l == pytest.approx(b.rouge_l, rel=1e-12)
    assert a.cider == pytest.approx(b.cider, rel=1e-9, abs=1e-12)


def test_report_marks_meteor_unavailable():
    r = evaluate_captions([["a", "b"]], [[["a", "b"]]], video_ids=["v1"])
    assert r.as_dict()["meteor"] == "unavailable"
    assert set(r.per_video["v1"]) == {"bleu4", "rouge_l", "cider"}


def test_input_validation():
    with pytest.raises(ContractError):
        bleu4([], [])
    with pytest.raises(ContractError):
        bleu4([["a"]], [[]])
    with pytest.raises(ContractError):
        bleu4([["a"], ["b"]], [[["a"]]])
