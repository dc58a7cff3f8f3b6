"""Unit inventories and word <-> unit-sequence conversion.

Three schemes are supported:

* ``word_only``: frequent words, plus OOV, silence and blank.
* ``letters_only``: letter n-grams plus the ``$`` word separator and blank.
* ``mixed``: frequent words and letter n-grams, ``$``-delimited. OOV words are
  decomposed into frequent words and letter chunks, so there is no OOV unit.
"""

from __future__ import annotations

import hashlib
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

ALPHABET = "abcdefghijklmnopqrstuvwxyz'*"
SEPARATOR = "$"
BLANK = "<blank>"
SILENCE = "<sil>"
OOV = "OOV"

SCHEMES = ("word_only", "letters_only", "mixed")
KINDS = ("word", "letter1", "letter2", "letter3", "separator", "blank", "silence", "oov")

VOCAB_MAGIC = "#mixctc-vocab"
VOCAB_VERSION = 1

_ALPHABET_SET = frozenset(ALPHABET)


class TokenizerError(ValueError):
    pass


@dataclass(frozen=True)
class UnitInventory:
    units: tuple[str, ...]
    kinds: tuple[str, ...]
    index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if len(self.units) != len(self.kinds):
            raise TokenizerError("units and kinds differ in length")
        index = {u: i for i, u in enumerate(self.units)}
        if len(index) != len(self.units):
            raise TokenizerError("duplicate unit strings in inventory")
        bad = [k for k in self.kinds if k not in KINDS]
        if bad:
            raise TokenizerError(f"unknown unit kind {bad[0]!r}")
        if self.kinds.count("blank") != 1 or self.kinds[-1] != "blank":
            raise TokenizerError("inventory needs exactly one blank, at the last index")
        object.__setattr__(self, "index", index)

    def __len__(self) -> int:
        return len(self.units)

    def __contains__(self, unit: str) -> bool:
        return unit in self.index

    @property
    def blank_id(self) -> int:
        return len(self.units) - 1

    def id(self, unit: str) -> int:
        return self.index[unit]

    def kind_of(self, unit_id: int) -> str:
        return self.kinds[unit_id]

    def id_of_kind(self, kind: str) -> int | None:
        for i, k in enumerate(self.kinds):
            if k == kind:
                return i
        return None


@dataclass(frozen=True)
class MixedVocab:
    """A unit inventory together with the rules that produced it.

    ``oov_word_match`` turns off frequent-word matching inside OOV words, which
    gives the "OOVs only: single-letter" decomposition (letters only for OOVs).
    """

    inventory: UnitInventory
    frequent_words: frozenset[str]
    min_count: int
    letter_order: int
    scheme: str
    oov_word_match: bool = True

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise TokenizerError(f"unknown scheme {self.scheme!r}")
        if self.letter_order not in (1, 2, 3):
            raise TokenizerError(f"letter_order must be 1, 2 or 3, got {self.letter_order}")

    def __len__(self) -> int:
        return len(self.inventory)

    @property
    def blank_id(self) -> int:
        return self.inventory.blank_id

    @property
    def separator_id(self) -> int | None:
        return self.inventory.index.get(SEPARATOR)

    @property
    def oov_id(self) -> int | None:
        return self.inventory.index.get(OOV)

    @property
    def silence_id(self) -> int | None:
        return self.inventory.index.get(SILENCE)

    def to_text(self) -> str:
        return format_vocab(self)

    def digest(self) -> bytes:
        """SHA-256 of the serialized vocabulary; embedded in checkpoints."""
        return hashlib.sha256(self.to_text().encode("utf-8")).digest()


@dataclass(frozen=True)
class LabelSequence:
    ids: tuple[int, ...]
    source_words: tuple[str, ...] = ()

    def __len__(self) -> int:
        return len(self.ids)


def normalize_words(line: str) -> list[str]:
    return line.lower().split()


def read_corpus(path) -> list[list[str]]:
    """One utterance per line, space-separated words (UTF-8)."""
    with open(path, encoding="utf-8") as f:
        return [normalize_words(line) for line in f if line.strip()]


def _check_word(word: str) -> None:
    if not word:
        raise TokenizerError("empty word")
    bad = set(word) - _ALPHABET_SET
    if bad:
        raise TokenizerError(
            f"word {word!r} contains characters outside the letter alphabet: {''.join(sorted(bad))!r}"
        )


def _letter_kind(chunk: str) -> str:
    return f"letter{len(chunk)}"


def decompose_word_letters(word: str, n: int) -> list[str]:
    """Chunk ``word`` left to right into ``n``-letter pieces, remainder last.

    >>> decompose_word_letters("newyork", 2)
    ['ne', 'wy', 'or', 'k']
    """
    if not word:
        raise TokenizerError("cannot decompose an empty word")
    if n not in (1, 2, 3):
        raise TokenizerError(f"letter n-gram size must be 1, 2 or 3, got {n}")
    return [word[i:i + n] for i in range(0, len(word), n)]


def _longest_prefix_match(word: str, start: int, words: frozenset[str], max_len: int) -> str | None:
    for end in range(min(len(word), start + max_len), start, -1):
        piece = word[start:end]
        if piece in words:
            return piece
    return None


def _frequent_max_len(vocab: MixedVocab) -> int:
    return max((len(w) for w in vocab.frequent_words), default=0)


def decompose_oov(word: str, vocab: MixedVocab) -> list[str]:
    """Split an infrequent word into frequent words and letter chunks.

    At each position the longest frequent word that is a prefix of the rest is
    consumed; failing that, one ``letter_order`` chunk is consumed. Scanning
    then resumes at the new position.
    """
    _check_word(word)
    if word in vocab.frequent_words:
        raise TokenizerError(f"{word!r} is a frequent word, not an OOV")
    n = vocab.letter_order
    use_words = vocab.oov_word_match and vocab.scheme == "mixed"
    max_len = _frequent_max_len(vocab) if use_words else 0
    out: list[str] = []
    i = 0
    while i < len(word):
        match = _longest_prefix_match(word, i, vocab.frequent_words, max_len) if use_words else None
        if match is not None:
            out.append(match)
            i += len(match)
        else:
            out.append(word[i:i + n])
            i += n
    return out


def _cover_chunk(chunk: str, inventory: UnitInventory) -> list[str]:
    # Unseen n-grams fall back to shorter chunking; single letters always exist.
    if chunk in inventory:
        return [chunk]
    if len(chunk) == 1:
        raise TokenizerError(f"letter {chunk!r} missing from inventory")
    out: list[str] = []
    for piece in decompose_word_letters(chunk, len(chunk) - 1):
        out.extend(_cover_chunk(piece, inventory))
    return out


def word_units(word: str, vocab: MixedVocab) -> list[str]:
    """Unit strings for one word under ``vocab``'s scheme (no separators)."""
    _check_word(word)
    if vocab.scheme == "word_only":
        return [word if word in vocab.frequent_words else OOV]
    if vocab.scheme == "mixed" and word in vocab.frequent_words:
        return [word]
    if vocab.scheme == "mixed":
        pieces = decompose_oov(word, vocab)
    else:
        pieces = decompose_word_letters(word, vocab.letter_order)
    out: list[str] = []
    for piece in pieces:
        if piece in vocab.frequent_words:
            out.append(piece)
        else:
            out.extend(_cover_chunk(piece, vocab.inventory))
    return out


def sentence_units(words: Sequence[str], vocab: MixedVocab) -> list[str]:
    if not words:
        return []
    if vocab.scheme == "word_only":
        return [u for w in words for u in word_units(w, vocab)]
    out = [SEPARATOR]
    for w in words:
        out.extend(word_units(w, vocab))
        out.append(SEPARATOR)
    return out


def encode_sentence(words: Sequence[str], vocab: MixedVocab) -> LabelSequence:
    """Encode a word sequence as unit ids.

    Separator-using schemes produce ``$ w1 $ w2 ... $``; the empty sentence
    encodes to an empty sequence.
    """
    words = [w.lower() for w in words]
    units = sentence_units(words, vocab)
    index = vocab.inventory.index
    return LabelSequence(ids=tuple(index[u] for u in units), source_words=tuple(words))


def decode_ids(ids: Iterable[int], vocab: MixedVocab) -> list[str]:
    return [vocab.inventory.units[i] for i in ids]


def collapse_units(units: Sequence[str], vocab: MixedVocab) -> list[str]:
    """Turn a unit-string sequence back into words.

    Splits on ``$`` and concatenates each group; input without separators is
    one group. For ``word_only`` every unit is a word (silence dropped).
    """
    if vocab.scheme == "word_only":
        return [u for u in units if u not in (SILENCE, BLANK)]
    words: list[str] = []
    group: list[str] = []
    for u in units:
        if u == SEPARATOR:
            if group:
                words.append("".join(group))
            group = []
        elif u != BLANK:
            group.append(u)
    if group:
        words.append("".join(group))
    return words


def build_vocab(
    corpus: Iterable[Sequence[str] | str],
    min_count: int,
    letter_order: int,
    scheme: str,
    oov_word_match: bool = True,
) -> MixedVocab:
    """Build a vocabulary from a transcript corpus.

    ``corpus`` yields utterances, either raw lines or word lists. Words are
    lowercased. Letter units are the n-grams seen when decomposing the corpus
    words under ``scheme``, plus every single letter.
    """
    if scheme not in SCHEMES:
        raise TokenizerError(f"unknown scheme {scheme!r}")
    if letter_order not in (1, 2, 3):
        raise TokenizerError(f"letter_order must be 1, 2 or 3, got {letter_order}")
    if min_count < 1:
        raise TokenizerError("min_count must be >= 1")
    counts: Counter[str] = Counter()
    n_utts = 0
    for utt in corpus:
        words = normalize_words(utt) if isinstance(utt, str) else [w.lower() for w in utt]
        n_utts += 1
        counts.update(words)
    if n_utts == 0 or not counts:
        raise TokenizerError("empty corpus")
    for w in counts:
        _check_word(w)

    frequent = frozenset(w for w, c in counts.items() if c >= min_count)
    vocab_words = sorted(counts)

    if scheme == "word_only":
        units = sorted(frequent) + [SILENCE, OOV, BLANK]
        kinds = ["word"] * len(frequent) + ["silence", "oov", "blank"]
        inv = UnitInventory(tuple(units), tuple(kinds))
        return MixedVocab(inv, frequent, min_count, letter_order, scheme, oov_word_match)

    if scheme == "letters_only":
        frequent = frozenset()
    # Decompose with a provisional vocab; letter chunks do not depend on the inventory.
    provisional = MixedVocab(
        UnitInventory((BLANK,), ("blank",)), frequent, min_count, letter_order, scheme, oov_word_match
    )
    chunks: set[str] = set(ALPHABET)
    for w in vocab_words:
        if w in frequent:
            continue
        if scheme == "mixed":
            pieces = decompose_oov(w, provisional)
        else:
            pieces = decompose_word_letters(w, letter_order)
        chunks.update(p for p in pieces if p not in frequent)
    chunks -= frequent

    words_part = sorted(frequent)
    letters_part = sorted(chunks, key=lambda s: (len(s), s))
    units = words_part + letters_part + [SEPARATOR, BLANK]
    kinds = ["word"] * len(words_part) + [_letter_kind(c) for c in letters_part] + ["separator", "blank"]
    inv = UnitInventory(tuple(units), tuple(kinds))
    return MixedVocab(inv, frequent, min_count, letter_order, scheme, oov_word_match)


def format_vocab(vocab: MixedVocab) -> str:
    header = "\t".join([
        VOCAB_MAGIC,
        f"version={VOCAB_VERSION}",
        f"scheme={vocab.scheme}",
        f"min_count={vocab.min_count}",
        f"letter_order={vocab.letter_order}",
        f"oov_word_match={int(vocab.oov_word_match)}",
    ])
    lines = [header]
    inv = vocab.inventory
    for i, (u, k) in enumerate(zip(inv.units, inv.kinds)):
        lines.append(f"{i}\t{k}\t{u}")
    return "\n".join(lines) + "\n"


def parse_vocab(text: str) -> MixedVocab:
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines or not lines[0].startswith(VOCAB_MAGIC + "\t"):
        raise TokenizerError("not a vocabulary file (bad header)")
    fields = dict(part.split("=", 1) for part in lines[0].split("\t")[1:])
    if int(fields.get("version", -1)) != VOCAB_VERSION:
        raise TokenizerError(f"unsupported vocabulary version {fields.get('version')!r}")
    units, kinds = [], []
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split("\t")
        if len(parts) != 3:
            raise TokenizerError(f"line {lineno}: expected '<id>\\t<kind>\\t<unit>'")
        idx, kind, unit = parts
        if int(idx) != len(units):
            raise TokenizerError(f"line {lineno}: ids must be contiguous from 0")
        units.append(unit)
        kinds.append(kind)
    inv = UnitInventory(tuple(units), tuple(kinds))
    frequent = frozenset(u for u, k in zip(units, kinds) if k == "word")
    return MixedVocab(
        inv,
        frequent,
        int(fields["min_count"]),
        int(fields["letter_order"]),
        fields["scheme"],
        bool(int(fields.get("oov_word_match", "1"))),
    )


def save_vocab(vocab: MixedVocab, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(format_vocab(vocab))


def load_vocab(path) -> MixedVocab:
    with open(path, encoding="utf-8", newline="\n") as f:
        return parse_vocab(f.read())
