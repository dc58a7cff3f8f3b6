"""Word error rate with Levenshtein traceback and OOV attribution."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence


@dataclass
class WerBreakdown:
    substitutions: int = 0
    deletions: int = 0
    insertions: int = 0
    ref_words: int = 0
    oov_attributed_errors: int = 0

    @property
    def errors(self) -> int:
        return self.substitutions + self.deletions + self.insertions

    @property
    def wer(self) -> float:
        return self.errors / self.ref_words if self.ref_words else 0.0

    def __iadd__(self, other: "WerBreakdown") -> "WerBreakdown":
        self.substitutions += other.substitutions
        self.deletions += other.deletions
        self.insertions += other.insertions
        self.ref_words += other.ref_words
        self.oov_attributed_errors += other.oov_attributed_errors
        return self


# Traceback preference on equal cost: match/substitution, then insertion, then deletion.
_OPS = ("sub", "ins", "del")


def align(ref: Sequence[str], hyp: Sequence[str]) -> list[tuple[str, int | None, int | None]]:
    """Minimum-edit alignment as ``(op, ref_index, hyp_index)``; op in ok/sub/ins/del."""
    n, m = len(ref), len(hyp)
    d = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(1, n + 1):
        d[i][0] = i
    for j in range(1, m + 1):
        d[0][j] = j
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            cost = 0 if ref[i - 1] == hyp[j - 1] else 1
            d[i][j] = min(d[i - 1][j - 1] + cost, d[i][j - 1] + 1, d[i - 1][j] + 1)
    ops = []
    i, j = n, m
    while i > 0 or j > 0:
        if i > 0 and j > 0:
            cost = 0 if ref[i - 1] == hyp[j - 1] else 1
            if d[i][j] == d[i - 1][j - 1] + cost:
                ops.append(("ok" if cost == 0 else "sub", i - 1, j - 1))
                i, j = i - 1, j - 1
                continue
        if j > 0 and d[i][j] == d[i][j - 1] + 1:
            ops.append(("ins", None, j - 1))
            j -= 1
        else:
            ops.append(("del", i - 1, None))
            i -= 1
    ops.reverse()
    return ops


def wer(ref: Sequence[str], hyp: Sequence[str], frequent_words: Iterable[str] | None = None) -> WerBreakdown:
    """Word errors of ``hyp`` against ``ref``.

    When ``frequent_words`` is given, substitutions and deletions of reference
    words outside it are counted as OOV-attributed.
    """
    if not ref:
        raise ValueError("reference must contain at least one word")
    freq = None if frequent_words is None else frozenset(frequent_words)
    out = WerBreakdown(ref_words=len(ref))
    for op, i, _ in align(ref, hyp):
        if op == "sub":
            out.substitutions += 1
        elif op == "del":
            out.deletions += 1
        elif op == "ins":
            out.insertions += 1
        if op in ("sub", "del") and freq is not None and ref[i] not in freq:
            out.oov_attributed_errors += 1
    return out


@dataclass
class CorpusReport:
    total: WerBreakdown
    rows: list[tuple[str, list[str], list[str], WerBreakdown]] = field(default_factory=list)

    def to_tsv(self) -> str:
        lines = ["utt_id\tref\thyp\tS\tD\tI\tWER"]
        for utt_id, ref, hyp, b in self.rows:
            lines.append(
                f"{utt_id}\t{' '.join(ref)}\t{' '.join(hyp)}\t{b.substitutions}\t{b.deletions}\t{b.insertions}\t{b.wer:.4f}"
            )
        t = self.total
        lines.append(f"TOTAL\t\t\t{t.substitutions}\t{t.deletions}\t{t.insertions}\t{t.wer:.4f}")
        return "\n".join(lines) + "\n"


def corpus_report(
    refs: Sequence[Sequence[str]],
    hyps: Sequence[Sequence[str]],
    frequent_words: Iterable[str] | None = None,
    utt_ids: Sequence[str] | None = None,
) -> CorpusReport:
    """Micro-averaged WER: total errors over total reference words."""
    if len(refs) != len(hyps):
        raise ValueError(f"{len(refs)} references but {len(hyps)} hypotheses")
    if utt_ids is None:
        utt_ids = [str(i) for i in range(len(refs))]
    freq = None if frequent_words is None else frozenset(frequent_words)
    total = WerBreakdown()
    rows = []
    for utt_id, r, h in zip(utt_ids, refs, hyps):
        b = wer(list(r), list(h), freq)
        total += b
        rows.append((utt_id, list(r), list(h), b))
    return CorpusReport(total, rows)
