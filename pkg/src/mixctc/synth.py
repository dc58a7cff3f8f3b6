"""Letter-compositional synthetic speech corpus.

Each letter owns a fixed random feature template; a word is rendered as its
letters, each held for a random number of frames, and words are separated by
short runs of a silence template. Frames are template plus Gaussian noise.
Because the acoustics are compositional, a model that has learned letters or
letter chunks can in principle emit words it never saw whole.

Infrequent words are compounds ``lexicon word + suffix``. A set of them
appears in training fewer than ``min_count`` times each; the OOV words placed
in test utterances are fresh compounds that never occur in training.
"""

from __future__ import annotations

import string
from dataclasses import dataclass

import numpy as np

from .dataio import Utterance
from .network import FeatureSequence


class SynthError(ValueError):
    pass


@dataclass(frozen=True)
class SyntheticCorpusSpec:
    lexicon_size: int = 50
    oov_fraction: float = 0.1
    frames_per_unit: tuple[int, int] = (1, 3)
    noise: float = 0.5
    n_train: int = 500
    n_test: int = 200
    words_per_utt: tuple[int, int] = (2, 5)
    feature_dim: int = 16
    min_count: int = 2
    word_len: tuple[int, int] = (3, 6)
    suffix_len: int = 3
    n_suffixes: int = 8
    n_rare: int = 120
    gap_frames: tuple[int, int] = (1, 2)
    letters: str = string.ascii_lowercase

    def validate(self) -> None:
        if not 0.0 <= self.oov_fraction <= 1.0:
            raise SynthError("oov_fraction must be in [0, 1]")
        if self.lexicon_size < 1 or self.n_train < 1 or self.n_test < 0:
            raise SynthError("lexicon_size and n_train must be positive")
        for lo, hi in (self.frames_per_unit, self.words_per_utt, self.word_len, self.gap_frames):
            if lo < 1 or hi < lo:
                raise SynthError("ranges must satisfy 1 <= lo <= hi")
        if self.noise < 0:
            raise SynthError("noise must be >= 0")
        if self.min_count < 2 and self.n_rare > 0:
            raise SynthError("rare training words need min_count >= 2 to stay infrequent")


@dataclass
class SyntheticCorpus:
    spec: SyntheticCorpusSpec
    train: list[Utterance]
    test: list[Utterance]
    lexicon: list[str]
    rare_words: list[str]
    test_oov_words: list[str]
    templates: dict[str, np.ndarray]


def _random_word(rng, letters: str, lo: int, hi: int) -> str:
    n = int(rng.integers(lo, hi + 1))
    return "".join(letters[i] for i in rng.integers(0, len(letters), size=n))


def _distinct_words(rng, count: int, letters: str, lo: int, hi: int, exclude=()) -> list[str]:
    seen = set(exclude)
    out = []
    for _ in range(100 * count + 100):
        if len(out) == count:
            return out
        w = _random_word(rng, letters, lo, hi)
        if w not in seen:
            seen.add(w)
            out.append(w)
    raise SynthError(f"could not draw {count} distinct words of length {lo}..{hi}")


def render(words, templates: dict[str, np.ndarray], spec: SyntheticCorpusSpec, rng) -> np.ndarray:
    """Frames for one utterance: silence, word, silence, ..., word, silence."""
    sil = templates["<sil>"]
    D = sil.shape[0]
    rows = []

    def gap():
        rows.extend([sil] * int(rng.integers(spec.gap_frames[0], spec.gap_frames[1] + 1)))

    gap()
    for w in words:
        for ch in w:
            rows.extend([templates[ch]] * int(rng.integers(spec.frames_per_unit[0], spec.frames_per_unit[1] + 1)))
        gap()
    clean = np.array(rows)
    noisy = clean + spec.noise * rng.standard_normal((len(rows), D))
    # Quantize once so saved feature files read back bit-identical.
    return noisy.astype(np.float32).astype(np.float64)


def synth_corpus(spec: SyntheticCorpusSpec, seed) -> SyntheticCorpus:
    """``seed`` is an int or a ``numpy.random.Generator`` that is consumed in place."""
    spec.validate()
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    D = spec.feature_dim
    templates = {ch: rng.standard_normal(D) for ch in spec.letters}
    templates["<sil>"] = rng.standard_normal(D)

    lexicon = _distinct_words(rng, spec.lexicon_size, spec.letters, *spec.word_len)
    suffixes = _distinct_words(rng, spec.n_suffixes, spec.letters, spec.suffix_len, spec.suffix_len)
    n_test_oov = int(round(spec.oov_fraction * spec.n_test))
    needed = spec.n_rare + n_test_oov
    pairs = [(w, s) for w in lexicon for s in suffixes if w + s not in lexicon]
    if needed > len(pairs):
        raise SynthError(
            f"infeasible OOV constraint: need {needed} distinct compound words, only {len(pairs)} possible"
        )
    chosen = rng.choice(len(pairs), size=needed, replace=False) if needed else []
    compounds = []
    seen = set(lexicon)
    for i in chosen:
        w = "".join(pairs[int(i)])
        if w in seen:
            continue
        seen.add(w)
        compounds.append(w)
    if len(compounds) < needed:
        raise SynthError("infeasible OOV constraint: compound words collide")
    rare, test_oov = compounds[: spec.n_rare], compounds[spec.n_rare:]

    ranks = np.arange(1, len(lexicon) + 1)
    probs = 1.0 / (ranks + 10.0)
    probs /= probs.sum()

    def sample_words() -> list[str]:
        n = int(rng.integers(spec.words_per_utt[0], spec.words_per_utt[1] + 1))
        return [lexicon[i] for i in rng.choice(len(lexicon), size=n, p=probs)]

    train_words = [sample_words() for _ in range(spec.n_train)]
    # Each rare word takes 1..min_count-1 distinct word slots so none is overwritten.
    placements = [w for w in rare for _ in range(int(rng.integers(1, spec.min_count)))]
    slots = [(i, j) for i, utt in enumerate(train_words) for j in range(len(utt))]
    if len(placements) > len(slots):
        raise SynthError(f"infeasible OOV constraint: {len(placements)} rare-word placements, {len(slots)} slots")
    for w, k in zip(placements, rng.choice(len(slots), size=len(placements), replace=False)):
        i, j = slots[int(k)]
        train_words[i][j] = w

    test_words = [sample_words() for _ in range(spec.n_test)]
    oov_utts = rng.choice(spec.n_test, size=n_test_oov, replace=False) if n_test_oov else []
    for w, u in zip(test_oov, oov_utts):
        utt = test_words[int(u)]
        utt[int(rng.integers(0, len(utt)))] = w

    train_counts: dict[str, int] = {}
    for utt in train_words:
        for w in utt:
            train_counts[w] = train_counts.get(w, 0) + 1
    for w in test_oov:
        if train_counts.get(w, 0) >= spec.min_count:
            raise SynthError(f"test OOV word {w!r} is frequent in training")

    def build(prefix, word_lists):
        return [
            Utterance(f"{prefix}{i:05d}", tuple(ws), FeatureSequence(render(ws, templates, spec, rng), f"{prefix}{i:05d}"))
            for i, ws in enumerate(word_lists)
        ]

    train = build("train", train_words)
    test = build("test", test_words)
    return SyntheticCorpus(spec, train, test, lexicon, rare, test_oov, templates)
