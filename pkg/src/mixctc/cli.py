"""Command-line entry point: ``mixctc <command> ...``."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .attention import MODES, AttentionConfig
from .checkpoint import load_checkpoint
from .config import PRESETS, apply_overrides, load_config, parse_config_text, resolve_output_dir
from .ctc import decode_to_words, write_posteriorgram
from .dataio import read_manifest, read_transcripts, write_manifest, write_transcripts
from .hybrid import dump_record, hybrid_decode, write_debug_dump
from .metrics import corpus_report
from .network import derive_letter_model, forward_many, init_network
from .synth import synth_corpus
from .tokenizer import SCHEMES, build_vocab, load_vocab, read_corpus, save_vocab
from .training import TrainConfig, train

log = logging.getLogger("mixctc")


def _cmd_vocab(args) -> int:
    corpus = read_corpus(args.corpus)
    vocab = build_vocab(corpus, args.min_count, args.letter_order, args.scheme, oov_word_match=not args.no_oov_word_match)
    save_vocab(vocab, args.out)
    print(f"{len(vocab)} units ({len(vocab.frequent_words)} frequent words) -> {args.out}")
    return 0


def _cmd_synth(args) -> int:
    cfg = _experiment_config(args)
    corpus = synth_corpus(cfg.synth, np.random.default_rng(cfg.seed))
    out = Path(args.out)
    write_manifest(corpus.train, out / "train.tsv", out / "feats")
    write_manifest(corpus.test, out / "test.tsv", out / "feats")
    with open(out / "train.txt", "w", encoding="utf-8", newline="\n") as f:
        f.writelines(" ".join(u.words) + "\n" for u in corpus.train)
    write_transcripts([(u.utt_id, u.words) for u in corpus.test], out / "test_ref.txt")
    print(f"{len(corpus.train)} train / {len(corpus.test)} test utterances -> {out}")
    return 0


def _cmd_train(args) -> int:
    vocab = load_vocab(args.vocab)
    utts = read_manifest(args.manifest)
    rng = np.random.default_rng(args.seed)
    attn = None
    if args.attention:
        attn = AttentionConfig(tau=args.tau, mode=args.attention, use_implicit_lm=args.implicit_lm,
                               vector_attention=args.vector_attention)
    if args.share_from:
        params = derive_letter_model(load_checkpoint(args.share_from), vocab, rng, attn)
    else:
        D = utts[0].feats.frames.shape[1]
        params = init_network(rng, D, args.hidden, args.layers, len(vocab), attn)
    hyper = TrainConfig(epochs=args.epochs, lr=args.lr, batch_size=args.batch_size, clip_norm=args.clip_norm,
                        optimizer=args.optimizer, seed=args.seed)
    res = train(params, [(u.feats, u.words) for u in utts], vocab, hyper, checkpoint_path=args.out)
    if res.losses:
        print(f"final loss {res.losses[-1]:.4f} after {len(res.losses)} epochs -> {args.out}")
    return 0


def _load_model(ckpt, vocab_path):
    vocab = load_vocab(vocab_path)
    return load_checkpoint(ckpt, vocab.digest()), vocab


def _cmd_decode(args) -> int:
    params, vocab = _load_model(args.checkpoint, args.vocab)
    utts = read_manifest(args.manifest)
    posts = forward_many(params, [u.feats for u in utts])
    if args.posteriors:
        d = Path(args.posteriors)
        d.mkdir(parents=True, exist_ok=True)
        for u, p in zip(utts, posts):
            write_posteriorgram(p, d / f"{u.utt_id}.pgrm")
    write_transcripts([(u.utt_id, decode_to_words(p, vocab)) for u, p in zip(utts, posts)], args.out)
    return 0


def _cmd_hybrid_decode(args) -> int:
    wparams, wvocab = _load_model(args.word_checkpoint, args.word_vocab)
    lparams, lvocab = _load_model(args.letter_checkpoint, args.letter_vocab)
    utts = read_manifest(args.manifest)
    feats = [u.feats for u in utts]
    pairs, records = [], []
    for u, wp, lp in zip(utts, forward_many(wparams, feats), forward_many(lparams, feats)):
        res, tokens, letters = hybrid_decode(wp, wvocab, lp, lvocab)
        pairs.append((u.utt_id, res.words))
        records.append(dump_record(u.utt_id, tokens, letters, res, u.words))
    write_transcripts(pairs, args.out)
    if args.debug_dump:
        write_debug_dump(records, args.debug_dump)
    return 0


def _cmd_score(args) -> int:
    refs = dict(read_transcripts(args.ref))
    hyps = read_transcripts(args.hyp)
    missing = [i for i, _ in hyps if i not in refs]
    if missing:
        raise ValueError(f"hypothesis ids without a reference: {missing[:5]}")
    freq = load_vocab(args.vocab).frequent_words if args.vocab else None
    ids = [i for i, _ in hyps]
    rep = corpus_report([refs[i] for i in ids], [h for _, h in hyps], freq, ids)
    if args.report:
        Path(args.report).write_text(rep.to_tsv(), encoding="utf-8")
    else:
        sys.stdout.write(rep.to_tsv())
    t = rep.total
    line = f"WER {100 * t.wer:.2f}% (S={t.substitutions} D={t.deletions} I={t.insertions} N={t.ref_words})"
    if freq is not None:
        line += f" OOV-attributed={t.oov_attributed_errors}"
    print(line)
    return 0


def _experiment_config(args):
    cfg = load_config(args.config, PRESETS[args.preset] if args.preset else None) if args.config else PRESETS[args.preset or "toy"]
    overrides = parse_config_text("\n".join(args.set or []))
    if args.seed is not None:
        overrides["seed"] = str(args.seed)
    return apply_overrides(cfg, overrides)


def _cmd_experiment(args) -> int:
    from .experiment import run_experiment

    cfg = _experiment_config(args)
    cfg = replace(cfg, output_dir=args.out) if args.out else resolve_output_dir(cfg)
    result = run_experiment(cfg)
    print(result.to_markdown())
    print(f"tables written to {cfg.output_dir}/results.{{tsv,md,json}}")
    return 0


def _add_experiment_opts(p) -> None:
    p.add_argument("--preset", choices=sorted(PRESETS), help="named configuration (default: toy)")
    p.add_argument("--config", help="key=value config file; a preset= line selects the base preset")
    p.add_argument("--seed", type=int, help="master seed for data, initialisation and shuffling")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key (repeatable)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mixctc", description="Word, letter, hybrid and mixed-unit CTC toolkit.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("vocab", help="build a unit inventory from a transcript corpus")
    p.add_argument("corpus", help="transcript file, one utterance per line")
    p.add_argument("--scheme", choices=SCHEMES, default="mixed")
    p.add_argument("--min-count", type=int, default=2)
    p.add_argument("--letter-order", type=int, choices=(1, 2, 3), default=3)
    p.add_argument("--no-oov-word-match", action="store_true", help="spell OOVs with letter units only")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_vocab)

    p = sub.add_parser("synth", help="write a seeded synthetic corpus as manifests and feature files")
    _add_experiment_opts(p)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("train", help="train a CTC model")
    p.add_argument("--manifest", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--out", required=True, help="checkpoint path, rewritten every epoch")
    p.add_argument("--hidden", type=int, default=32)
    p.add_argument("--layers", type=int, default=2)
    p.add_argument("--epochs", type=int, default=40)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--clip-norm", type=float, default=5.0)
    p.add_argument("--optimizer", choices=("sgd", "adam"), default="sgd")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--share-from", metavar="CKPT", help="word model whose bottom layers are shared and frozen")
    p.add_argument("--attention", choices=MODES, help="enable attention CTC with this scoring mode")
    p.add_argument("--tau", type=int, default=1)
    p.add_argument("--implicit-lm", action="store_true")
    p.add_argument("--vector-attention", action="store_true")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("decode", help="greedy-decode a manifest")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="hypothesis transcripts")
    p.add_argument("--posteriors", metavar="DIR", help="also write one posteriorgram file per utterance")
    p.set_defaults(func=_cmd_decode)

    p = sub.add_parser("hybrid-decode", help="word CTC decode with OOVs filled from a letter CTC")
    p.add_argument("--word-checkpoint", required=True)
    p.add_argument("--word-vocab", required=True)
    p.add_argument("--letter-checkpoint", required=True)
    p.add_argument("--letter-vocab", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--debug-dump", metavar="JSONL", help="spans, overlaps and choices per OOV token")
    p.set_defaults(func=_cmd_hybrid_decode)

    p = sub.add_parser("score", help="WER of hypotheses against references")
    p.add_argument("--ref", required=True)
    p.add_argument("--hyp", required=True)
    p.add_argument("--vocab", help="count errors on words outside this vocabulary's frequent words")
    p.add_argument("--report", help="write the per-utterance TSV here instead of stdout")
    p.set_defaults(func=_cmd_score)

    p = sub.add_parser("experiment", help="run the full comparison and write the result tables")
    _add_experiment_opts(p)
    p.add_argument("--out", help="output directory (default: config output_dir or $MIXCTC_OUTPUT_DIR)")
    p.set_defaults(func=_cmd_experiment)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (OSError, ValueError, KeyError) as exc:
        print(f"mixctc {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
