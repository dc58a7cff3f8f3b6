from __future__ import annotations

from functools import lru_cache

import pytest
from hypothesis import given, settings, strategies as st

from mixctc.metrics import align, corpus_report, wer


def _edit_distance(ref, hyp) -> int:
    # Plain recursion, independent of the DP table in the module.
    @lru_cache(maxsize=None)
    def d(i, j):
        if i == 0:
            return j
        if j == 0:
            return i
        return min(d(i - 1, j - 1) + (ref[i - 1] != hyp[j - 1]), d(i - 1, j) + 1, d(i, j - 1) + 1)

    return d(len(ref), len(hyp))


def test_examples():
    b = wer("the cat sat".split(), "the bat sat down".split())
    assert (b.substitutions, b.deletions, b.insertions) == (1, 0, 1)
    assert b.wer == pytest.approx(2 / 3)
    assert wer(["a"], ["a"]).wer == 0.0
    assert wer(["a", "b"], []).deletions == 2
    assert wer(["a"], ["x", "y", "z"]).errors == 3


def test_empty_reference_rejected():
    with pytest.raises(ValueError):
        wer([], ["a"])


def test_traceback_prefers_substitution():
    assert [op for op, _, _ in align(["a"], ["b"])] == ["sub"]
    ops = [op for op, _, _ in align(["a", "b"], ["c"])]
    assert ops.count("sub") == 1 and ops.count("del") == 1


def test_oov_attribution():
    freq = {"the", "cat"}
    b = wer(["the", "zorbix", "cat"], ["the", "OOV", "cat"], freq)
    assert b.oov_attributed_errors == 1
    b = wer(["the", "zorbix", "cat"], ["the", "cat"], freq)
    assert b.oov_attributed_errors == 1
    b = wer(["the", "cat"], ["a", "cat"], freq)
    assert b.oov_attributed_errors == 0


def test_corpus_wer_is_micro_averaged():
    refs = [["a"], ["b", "c", "d"]]
    hyps = [["x"], ["b", "c", "d"]]
    rep = corpus_report(refs, hyps)
    assert rep.total.wer == pytest.approx(1 / 4)
    tsv = rep.to_tsv().splitlines()
    assert tsv[0].split("\t") == ["utt_id", "ref", "hyp", "S", "D", "I", "WER"]
    assert tsv[-1].startswith("TOTAL")
    with pytest.raises(ValueError):
        corpus_report(refs, hyps[:1])


_sent = st.lists(st.sampled_from(["a", "b", "c", "d"]), max_size=7)


@settings(max_examples=300, deadline=None)
@given(ref=_sent.filter(bool), hyp=_sent)
def test_error_count_matches_brute_force(ref, hyp):
    b = wer(ref, hyp)
    assert b.errors == _edit_distance(tuple(ref), tuple(hyp))
    # the alignment must consume both sequences in order
    ops = align(ref, hyp)
    assert [i for _, i, _ in ops if i is not None] == list(range(len(ref)))
    assert [j for _, _, j in ops if j is not None] == list(range(len(hyp)))
    assert b.substitutions + b.deletions + sum(op == "ok" for op, _, _ in ops) == len(ref)
