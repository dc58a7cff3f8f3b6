from __future__ import annotations

from collections import Counter

import numpy as np
import pytest

from mixctc.ctc import decode_to_words
from mixctc.network import forward, init_network
from mixctc.synth import SynthError, SyntheticCorpusSpec, synth_corpus
from mixctc.tokenizer import build_vocab
from mixctc.training import TrainConfig, train

SMALL = SyntheticCorpusSpec(lexicon_size=10, n_train=60, n_test=20, n_rare=6, n_suffixes=3, feature_dim=4)


def test_same_seed_same_corpus():
    a, b = synth_corpus(SMALL, 5), synth_corpus(SMALL, 5)
    assert [u.words for u in a.train] == [u.words for u in b.train]
    assert all(x.feats.frames.tobytes() == y.feats.frames.tobytes() for x, y in zip(a.test, b.test))
    c = synth_corpus(SMALL, 6)
    assert [u.words for u in a.train] != [u.words for u in c.train]


def test_generator_seed_is_consumed():
    rng = np.random.default_rng(1)
    a = synth_corpus(SMALL, rng)
    b = synth_corpus(SMALL, rng)
    assert [u.words for u in a.train] != [u.words for u in b.train]
    assert [u.words for u in synth_corpus(SMALL, np.random.default_rng(1)).train] == [u.words for u in a.train]


def test_oov_constraints():
    c = synth_corpus(SyntheticCorpusSpec(), 0)
    counts = Counter(w for u in c.train for w in u.words)
    assert len(c.lexicon) == 50 and len(c.train) == 500
    n_oov_utts = sum(any(w in c.test_oov_words for w in u.words) for u in c.test)
    assert n_oov_utts == round(0.1 * len(c.test))
    for w in c.test_oov_words:
        assert counts[w] < 2
    for w in c.rare_words:
        assert 0 < counts[w] < 2


def test_features_shape_and_quantization():
    c = synth_corpus(SMALL, 2)
    for u in c.train[:10]:
        f = u.feats.frames
        assert f.shape[1] == 4
        assert np.array_equal(f.astype(np.float32).astype(np.float64), f)
        letters = sum(len(w) for w in u.words)
        assert f.shape[0] >= letters + len(u.words) + 1


def test_infeasible_oov_constraint():
    with pytest.raises(SynthError, match="infeasible"):
        synth_corpus(SyntheticCorpusSpec(lexicon_size=2, n_suffixes=1, n_rare=5), 0)


def test_spec_validation():
    with pytest.raises(SynthError):
        SyntheticCorpusSpec(oov_fraction=1.5).validate()
    with pytest.raises(SynthError):
        SyntheticCorpusSpec(frames_per_unit=(3, 1)).validate()
    with pytest.raises(SynthError):
        SyntheticCorpusSpec(min_count=1).validate()


def test_no_oov_fraction_keeps_test_words_frequent():
    c = synth_corpus(SyntheticCorpusSpec(oov_fraction=0.0, n_rare=0), 4)
    frequent = build_vocab([u.words for u in c.train], 2, 3, "word_only").frequent_words
    assert {w for u in c.test for w in u.words} <= frequent


def test_noiseless_single_utterance_is_learnable():
    spec = SyntheticCorpusSpec(lexicon_size=3, n_train=1, n_test=0, n_rare=0, oov_fraction=0.0, noise=0.0, feature_dim=6)
    c = synth_corpus(spec, 1)
    u = c.train[0]
    vocab = build_vocab([u.words], 1, 1, "letters_only")
    p = init_network(np.random.default_rng(0), 6, 8, 2, len(vocab))
    p = train(p, [(u.feats, u.words)], vocab, TrainConfig(epochs=150, lr=0.05, batch_size=1, optimizer="adam")).params
    assert decode_to_words(forward(p, u.feats), vocab) == list(u.words)
