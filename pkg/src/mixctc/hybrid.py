"""Word-CTC output with OOV tokens filled in from a letter-CTC decode.

Each OOV token is replaced by the letter-model word whose frame span overlaps
the OOV token's span the most. Ties go to the earlier letter word; with no
overlap at all the OOV token is kept.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

from .ctc import Posteriorgram, SpikeSegment, greedy_decode
from .tokenizer import OOV, SEPARATOR, SILENCE, MixedVocab


@dataclass(frozen=True)
class LetterWordSpan:
    word: str
    start: int
    end: int

    def __post_init__(self):
        if not self.word:
            raise ValueError("letter word must be non-empty")
        if self.start > self.end:
            raise ValueError("span start after end")


@dataclass
class Replacement:
    oov_index: int
    oov_span: tuple[int, int]
    overlaps: list[int]
    chosen: str | None
    reason: str  # "unique_max", "tie" or "zero_overlap"


@dataclass
class HybridResult:
    words: list[str]
    replacements: list[Replacement] = field(default_factory=list)


def overlap(a: tuple[int, int], b: tuple[int, int]) -> int:
    """Frames shared by two inclusive spans."""
    return max(0, min(a[1], b[1]) - max(a[0], b[0]) + 1)


def letter_words_with_spans(letter_segments: Sequence[SpikeSegment], vocab: MixedVocab) -> list[LetterWordSpan]:
    """Group letter-unit segments into ``$``-delimited words with covering spans."""
    units = vocab.inventory.units
    words: list[LetterWordSpan] = []
    group: list[SpikeSegment] = []

    def flush():
        if group:
            words.append(LetterWordSpan("".join(units[s.unit_id] for s in group), group[0].start, group[-1].end))
        group.clear()

    for seg in letter_segments:
        unit = units[seg.unit_id]
        if unit == SEPARATOR:
            flush()
        elif seg.unit_id != vocab.blank_id:
            group.append(seg)
    flush()
    return words


def word_tokens(post: Posteriorgram, vocab: MixedVocab) -> list[tuple[str, SpikeSegment]]:
    """Greedy word-CTC decode keeping spans; silence tokens are dropped."""
    units = vocab.inventory.units
    return [(units[k], seg) for k, seg in greedy_decode(post) if units[k] != SILENCE]


def replace_oov_detailed(
    tokens: Sequence[tuple[str, SpikeSegment]], letter_words: Sequence[LetterWordSpan]
) -> HybridResult:
    out: list[str] = []
    reps: list[Replacement] = []
    for i, (word, seg) in enumerate(tokens):
        if word != OOV:
            out.append(word)
            continue
        ov = [overlap(seg.span, (lw.start, lw.end)) for lw in letter_words]
        best = max(ov, default=0)
        if best == 0:
            out.append(word)
            reps.append(Replacement(i, seg.span, ov, None, "zero_overlap"))
            continue
        winner = ov.index(best)
        reason = "tie" if ov.count(best) > 1 else "unique_max"
        out.append(letter_words[winner].word)
        reps.append(Replacement(i, seg.span, ov, letter_words[winner].word, reason))
    return HybridResult(out, reps)


def replace_oov(tokens: Sequence[tuple[str, SpikeSegment]], letter_words: Sequence[LetterWordSpan]) -> list[str]:
    return replace_oov_detailed(tokens, letter_words).words


def hybrid_decode(
    word_post: Posteriorgram, word_vocab: MixedVocab, letter_post: Posteriorgram, letter_vocab: MixedVocab
) -> tuple[HybridResult, list[tuple[str, SpikeSegment]], list[LetterWordSpan]]:
    tokens = word_tokens(word_post, word_vocab)
    letters = letter_words_with_spans([seg for _, seg in greedy_decode(letter_post)], letter_vocab)
    return replace_oov_detailed(tokens, letters), tokens, letters


def dump_record(utt_id: str, tokens, letter_words, result: HybridResult, reference: Sequence[str] | None = None) -> dict:
    rec = {
        "utt": utt_id,
        "word_tokens": [{"word": w, "span": [s.start, s.end], "peak": s.peak} for w, s in tokens],
        "letter_words": [{"word": lw.word, "span": [lw.start, lw.end]} for lw in letter_words],
        "replacements": [
            {
                "token_index": r.oov_index,
                "oov_span": list(r.oov_span),
                "overlaps": r.overlaps,
                "chosen": r.chosen,
                "reason": r.reason,
            }
            for r in result.replacements
        ],
        "output": result.words,
    }
    if reference is not None:
        rec["reference"] = list(reference)
    return rec


def write_debug_dump(records, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for rec in records:
            f.write(json.dumps(rec, sort_keys=True) + "\n")
