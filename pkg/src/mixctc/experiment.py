"""Desk-scale comparison of word, letter, hybrid and mixed-unit CTC systems.

The run builds every vocabulary, trains each model, greedy-decodes the test
set and writes three comparison tables:

* ``letters``: letter-only CTC by unit size (plus attention and shared-layer variants)
* ``hybrid``: word CTC alone vs. word CTC with OOVs filled from a letter CTC
* ``mixed``: word CTC vs. mixed-unit CTC
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .checkpoint import load_checkpoint
from .config import ExperimentConfig, format_config
from .ctc import decode_to_words
from .dataio import read_manifest, write_manifest, write_transcripts
from .hybrid import dump_record, hybrid_decode, write_debug_dump
from .metrics import WerBreakdown, corpus_report
from .network import NetworkParams, derive_letter_model, forward_many, init_network
from .synth import synth_corpus
from .tokenizer import OOV, MixedVocab, build_vocab, save_vocab
from .training import TrainConfig, train

log = logging.getLogger(__name__)

TABLE_TITLES = {
    "letters": "Letter-based CTC by unit size",
    "hybrid": "Word CTC and hybrid CTC",
    "mixed": "Word CTC and mixed-unit CTC",
}


@dataclass
class SystemResult:
    table: str
    system: str
    units: int
    breakdown: WerBreakdown
    oov_tokens: int
    final_loss: float

    def row(self) -> dict:
        b = self.breakdown
        return {
            "table": self.table,
            "system": self.system,
            "units": self.units,
            "wer": round(100.0 * b.wer, 4),
            "S": b.substitutions,
            "D": b.deletions,
            "I": b.insertions,
            "N": b.ref_words,
            "oov_tokens": self.oov_tokens,
            "oov_attributed_errors": b.oov_attributed_errors,
            "final_loss": round(self.final_loss, 6),
        }


@dataclass
class ExperimentResult:
    systems: list[SystemResult] = field(default_factory=list)

    def get(self, system: str) -> SystemResult:
        for s in self.systems:
            if s.system == system:
                return s
        raise KeyError(system)

    def wer(self, system: str) -> float:
        return 100.0 * self.get(system).breakdown.wer

    def to_tsv(self) -> str:
        cols = ["table", "system", "units", "wer", "S", "D", "I", "N", "oov_tokens", "oov_attributed_errors", "final_loss"]
        lines = ["\t".join(cols)]
        for s in self.systems:
            r = s.row()
            lines.append("\t".join(str(r[c]) for c in cols))
        return "\n".join(lines) + "\n"

    def to_markdown(self) -> str:
        out = []
        for table, title in TABLE_TITLES.items():
            rows = [s for s in self.systems if s.table == table]
            if not rows:
                continue
            out.append(f"## {title}\n")
            out.append("| system | units | WER (%) | OOV tokens emitted |")
            out.append("|---|---:|---:|---:|")
            for s in rows:
                out.append(f"| {s.system} | {s.units} | {100.0 * s.breakdown.wer:.2f} | {s.oov_tokens} |")
            out.append("")
        return "\n".join(out)


class _Run:
    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.out = Path(cfg.output_dir)
        self.rng = np.random.default_rng(cfg.seed)
        self.result = ExperimentResult()

    def hyper(self) -> TrainConfig:
        c = self.cfg
        return TrainConfig(
            epochs=c.epochs, lr=c.lr, batch_size=c.batch_size, clip_norm=c.clip_norm,
            optimizer=c.optimizer, seed=int(self.rng.integers(2**31 - 1)),
        )

    def fit(self, name: str, params: NetworkParams, vocab: MixedVocab) -> tuple[NetworkParams, float]:
        save_vocab(vocab, self.out / "vocab" / f"{name}.txt")
        ckpt = self.out / "models" / f"{name}.ckpt"
        res = train(params, self.train_pairs, vocab, self.hyper(), checkpoint_path=ckpt)
        log.info("%s: %d epochs, final loss %.4f", name, len(res.losses), res.losses[-1] if res.losses else float("nan"))
        # Decode from the checkpoint so the saved artifact is what gets scored.
        return load_checkpoint(ckpt, vocab.digest()), (res.losses[-1] if res.losses else float("nan"))

    def score(self, table: str, system: str, units: int, hyps, loss: float) -> SystemResult:
        refs = [list(u.words) for u in self.test]
        rep = corpus_report(refs, hyps, self.frequent, [u.utt_id for u in self.test])
        safe = system.replace(" ", "_").replace("+", "plus").replace("(", "").replace(")", "")
        (self.out / "hyp" / f"{safe}.tsv").write_text(rep.to_tsv(), encoding="utf-8")
        res = SystemResult(table, system, units, rep.total, sum(h.count(OOV) for h in hyps), loss)
        self.result.systems.append(res)
        log.info("%-40s WER %.2f%%", system, 100.0 * rep.total.wer)
        return res

    def init(self, vocab: MixedVocab, attention=None) -> NetworkParams:
        c = self.cfg
        return init_network(self.rng, self.input_dim, c.hidden, c.layers, len(vocab), attention)

    def decode(self, params: NetworkParams, vocab: MixedVocab):
        posts = forward_many(params, [u.feats for u in self.test])
        return posts, [decode_to_words(p, vocab) for p in posts]

    def run(self) -> ExperimentResult:
        c = self.cfg
        c.validate()
        for sub in ("vocab", "models", "hyp", "data"):
            (self.out / sub).mkdir(parents=True, exist_ok=True)
        # output_dir is left out so reruns elsewhere produce identical files
        settings = [line for line in format_config(c).splitlines() if not line.startswith("output_dir=")]
        (self.out / "config.txt").write_text("\n".join(settings) + "\n", encoding="utf-8")
        if c.train_manifest:
            self.train_utts = read_manifest(c.train_manifest)
            self.test = read_manifest(c.test_manifest)
        else:
            corpus = synth_corpus(c.synth, self.rng)
            self.train_utts, self.test = corpus.train, corpus.test
            write_manifest(self.train_utts, self.out / "data" / "train.tsv", self.out / "data" / "feats")
            write_manifest(self.test, self.out / "data" / "test.tsv", self.out / "data" / "feats")
        write_transcripts([(u.utt_id, u.words) for u in self.test], self.out / "data" / "test_ref.txt")
        self.train_pairs = [(u.feats, u.words) for u in self.train_utts]
        self.input_dim = self.train_utts[0].feats.frames.shape[1]
        train_words = [u.words for u in self.train_utts]

        word_vocab = build_vocab(train_words, c.min_count, 3, "word_only")
        self.frequent = word_vocab.frequent_words
        word_params, word_loss = self.fit("word", self.init(word_vocab), word_vocab)
        word_posts, hyps = self.decode(word_params, word_vocab)
        self.score("hybrid", "word CTC", len(word_vocab), hyps, word_loss)

        names = {1: "single-letter", 2: "double-letter", 3: "triple-letter"}
        for n in c.letter_orders:
            v = build_vocab(train_words, c.min_count, n, "letters_only")
            p, loss = self.fit(f"letters{n}", self.init(v), v)
            self.score("letters", f"{names[n]} CTC", len(v), self.decode(p, v)[1], loss)
            if "letters" in c.attention_systems:
                p, loss = self.fit(f"letters{n}_attn", self.init(v, c.attention_config(implicit_lm=True)), v)
                self.score("letters", f"{names[n]} attention CTC", len(v), self.decode(p, v)[1], loss)

        n = c.hybrid_letter_order
        lv = build_vocab(train_words, c.min_count, n, "letters_only")
        attn = c.attention_config(implicit_lm=True) if "letters" in c.attention_systems else None
        derived = derive_letter_model(word_params, lv, self.rng, attn)
        lp, loss = self.fit(f"hybrid_letters{n}", derived, lv)
        letter_posts, letter_hyps = self.decode(lp, lv)
        self.score("letters", f"{names[n]} CTC (shared hidden layers)", len(lv), letter_hyps, loss)
        records, hyb_hyps = [], []
        for u, wp, lpost in zip(self.test, word_posts, letter_posts):
            res, tokens, letters = hybrid_decode(wp, word_vocab, lpost, lv)
            hyb_hyps.append(res.words)
            records.append(dump_record(u.utt_id, tokens, letters, res, u.words))
        write_debug_dump(records, self.out / "hyp" / "hybrid_debug.jsonl")
        self.score("hybrid", f"word CTC + {names[n]} CTC (hybrid)", len(word_vocab), hyb_hyps, word_loss)

        self.score("mixed", "word CTC", len(word_vocab), hyps, word_loss)
        for n in c.mixed_letter_orders:
            v = build_vocab(train_words, c.min_count, n, "mixed")
            p, loss = self.fit(f"mixed{n}", self.init(v), v)
            self.score("mixed", f"mixed (OOV: word + {names[n]}) CTC", len(v), self.decode(p, v)[1], loss)
            if "mixed" in c.attention_systems:
                p, loss = self.fit(f"mixed{n}_attn", self.init(v, c.attention_config(implicit_lm=False)), v)
                self.score("mixed", f"mixed (OOV: word + {names[n]}) attention CTC", len(v), self.decode(p, v)[1], loss)

        (self.out / "results.tsv").write_text(self.result.to_tsv(), encoding="utf-8")
        (self.out / "results.md").write_text(self.result.to_markdown(), encoding="utf-8")
        (self.out / "results.json").write_text(
            json.dumps([s.row() for s in self.result.systems], indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        return self.result


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    return _Run(cfg).run()
