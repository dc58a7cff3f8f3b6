"""Shared oracles for the test suite."""

from __future__ import annotations

import numpy as np

from mixctc.ctc import Posteriorgram


def random_posteriorgram(rng: np.random.Generator, T: int, V: int, blank: int | None = None, sharp: float = 1.0) -> Posteriorgram:
    z = sharp * rng.standard_normal((T, V))
    p = np.exp(z - z.max(axis=1, keepdims=True))
    return Posteriorgram(p / p.sum(axis=1, keepdims=True), V - 1 if blank is None else blank)


def feasible_labels(rng: np.random.Generator, T: int, V: int, blank: int, max_len: int) -> list[int]:
    """Random label ids (no blank) that fit in T frames."""
    units = [k for k in range(V) if k != blank]
    while True:
        n = int(rng.integers(1, max_len + 1))
        labels = [int(units[i]) for i in rng.integers(0, len(units), size=n)]
        repeats = sum(a == b for a, b in zip(labels, labels[1:]))
        if len(labels) + repeats <= T:
            return labels


def central_difference(f, x: np.ndarray, eps: float) -> np.ndarray:
    """Numerical gradient of scalar ``f()`` w.r.t. array ``x``, perturbed in place."""
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + eps
        up = f()
        x[i] = old - eps
        down = f()
        x[i] = old
        g[i] = (up - down) / (2 * eps)
    return g


def relative_error(analytic, numeric) -> float:
    """||a - n|| / max(||a||, ||n||) over the flattened arrays."""
    a = np.concatenate([np.ravel(v) for v in analytic]) if isinstance(analytic, (list, tuple)) else np.ravel(analytic)
    n = np.concatenate([np.ravel(v) for v in numeric]) if isinstance(numeric, (list, tuple)) else np.ravel(numeric)
    scale = max(np.linalg.norm(a), np.linalg.norm(n), 1e-30)
    return float(np.linalg.norm(a - n) / scale)


def _peaked(units_per_frame: list[int], V: int, mass: float = 0.9) -> Posteriorgram:
    p = np.full((len(units_per_frame), V), (1 - mass) / (V - 1))
    p[np.arange(len(units_per_frame)), units_per_frame] = mass
    return Posteriorgram(p, V - 1)


def aligned_posteriorgrams(words, word_vocab, letter_vocab, rng=None, jitter: int = 0, min_span: int = 9, gap: int = 2):
    """Word and letter posteriorgrams for ``words`` with known spans.

    Word ``i`` is a single word-model run over ``[s_i, e_i]``. Its letter units
    fill ``[s_i + d1, e_i + d2]`` with ``d1, d2`` drawn from ``[-jitter, jitter]``,
    kept in order and at least one ``$`` frame apart.
    """
    from mixctc.tokenizer import OOV, SEPARATOR, word_units

    spans, t = [], gap
    for w in words:
        n = len(word_units(w, letter_vocab))
        length = max(min_span, 2 * n)
        spans.append((t, t + length - 1))
        t += length + gap
    groups, prev_end = [], -2
    for (s, e), w in zip(spans, words):
        units = [letter_vocab.inventory.id(u) for u in word_units(w, letter_vocab)]
        d1, d2 = (0, 0) if not jitter else (int(rng.integers(-jitter, jitter + 1)) for _ in range(2))
        a = max(s + d1, prev_end + 2, 0)
        b = max(e + d2, a + 2 * len(units) - 1)
        groups.append((a, b, units))
        prev_end = b
    T = max(spans[-1][1], groups[-1][1]) + gap + 1

    wframes = [word_vocab.blank_id] * T
    for (s, e), w in zip(spans, words):
        k = word_vocab.inventory.id(w if w in word_vocab.frequent_words else OOV)
        wframes[s:e + 1] = [k] * (e - s + 1)
    sep = letter_vocab.inventory.id(SEPARATOR)
    lframes = [sep] * T
    for a, b, units in groups:
        size = (b - a + 1) / len(units)
        for j, k in enumerate(units):
            lo, hi = a + int(round(j * size)), a + int(round((j + 1) * size)) - 1
            lframes[lo:hi + 1] = [k] * (hi - lo + 1)
            if j and units[j - 1] == k:
                lframes[lo] = letter_vocab.blank_id
    return _peaked(wframes, len(word_vocab)), _peaked(lframes, len(letter_vocab)), spans
