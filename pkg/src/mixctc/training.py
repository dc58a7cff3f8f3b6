"""CTC training loop: minibatch SGD (or Adam) with global-norm gradient clipping."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .cells import log_softmax
from .checkpoint import save_checkpoint
from .ctc import ctc_forward_backward, min_frames
from .network import FeatureSequence, NetworkParams, backward, forward_batch, pad_batch
from .tokenizer import LabelSequence, MixedVocab, encode_sentence

log = logging.getLogger(__name__)

OPTIMIZERS = ("sgd", "adam")


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    lr: float = 0.05
    batch_size: int = 16
    clip_norm: float = 5.0
    optimizer: str = "sgd"
    seed: int = 0
    shuffle: bool = True

    def __post_init__(self):
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {OPTIMIZERS}")
        if self.batch_size < 1 or self.epochs < 0 or self.lr < 0:
            raise ValueError("batch_size >= 1, epochs >= 0 and lr >= 0 required")


@dataclass
class TrainResult:
    params: NetworkParams
    losses: list[float] = field(default_factory=list)
    skipped: int = 0


def batch_loss_and_grads(
    params: NetworkParams, feats: Sequence[FeatureSequence], labels: Sequence[LabelSequence | Sequence[int]]
):
    """Summed CTC loss over the batch and its gradients (summed, not averaged).

    Returns ``(total_loss, grads, per_utterance_losses)``.
    """
    X, lengths = pad_batch(feats)
    ids = [list(l.ids) if isinstance(l, LabelSequence) else list(l) for l in labels]
    logits, cache = forward_batch(params, X, lengths)
    lp = log_softmax(logits)
    log_like, occ = ctc_forward_backward(lp, lengths, ids, params.output_dim - 1)
    dlogits = (np.exp(lp) - occ) * cache.mask[..., None]
    grads = backward(params, cache, dlogits)
    per_utt = -log_like
    return float(per_utt.sum()), grads, per_utt


def global_norm(grads: dict[str, np.ndarray]) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))


def clip_gradients(grads: dict[str, np.ndarray], max_norm: float) -> float:
    norm = global_norm(grads)
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return norm


class _Adam:
    def __init__(self, lr: float, b1: float = 0.9, b2: float = 0.999, eps: float = 1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t = 0

    def step(self, arrays: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        for name, g in grads.items():
            m = self.m.setdefault(name, np.zeros_like(g))
            v = self.v.setdefault(name, np.zeros_like(g))
            m *= self.b1
            m += (1 - self.b1) * g
            v *= self.b2
            v += (1 - self.b2) * g * g
            mhat = m / (1 - self.b1**self.t)
            vhat = v / (1 - self.b2**self.t)
            arrays[name] -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


def encode_examples(corpus, vocab: MixedVocab):
    """Pair features with encoded labels, dropping utterances that cannot be aligned."""
    examples, skipped = [], 0
    for feats, words in corpus:
        labels = encode_sentence(list(words), vocab)
        if len(labels) == 0 or feats.T < min_frames(labels.ids):
            skipped += 1
            continue
        examples.append((feats, labels))
    return examples, skipped


def train(
    params: NetworkParams,
    corpus: Sequence[tuple[FeatureSequence, Sequence[str]]],
    vocab: MixedVocab,
    hyper: TrainConfig,
    checkpoint_path=None,
) -> TrainResult:
    """Train a copy of ``params`` on ``(features, words)`` pairs.

    Frozen layers are never touched. If ``checkpoint_path`` is given the
    current parameters are written there after every epoch.
    """
    if params.output_dim != len(vocab):
        raise ValueError(f"network output size {params.output_dim} != vocabulary size {len(vocab)}")
    examples, skipped = encode_examples(corpus, vocab)
    if skipped:
        log.info("skipped %d utterance(s) too short for their labels", skipped)
    if not examples:
        raise TrainingError("no trainable utterances")
    params = params.copy()
    arrays = dict(params.named_arrays())
    trainable = params.trainable_names()
    rng = np.random.default_rng(hyper.seed)
    adam = _Adam(hyper.lr) if hyper.optimizer == "adam" else None
    digest = vocab.digest()
    result = TrainResult(params, [], skipped)
    order = np.arange(len(examples))
    for epoch in range(hyper.epochs):
        if hyper.shuffle:
            order = rng.permutation(len(examples))
        total = 0.0
        for start in range(0, len(order), hyper.batch_size):
            idx = order[start:start + hyper.batch_size]
            feats = [examples[i][0] for i in idx]
            labels = [examples[i][1] for i in idx]
            loss, grads, per_utt = batch_loss_and_grads(params, feats, labels)
            if not np.isfinite(loss):
                bad = [feats[j].utt_id for j in np.flatnonzero(~np.isfinite(per_utt))]
                raise TrainingError(f"non-finite loss at epoch {epoch + 1}, batch starting {start}: {bad or 'gradients'}")
            total += loss
            grads = {k: grads[k] / len(idx) for k in trainable}
            clip_gradients(grads, hyper.clip_norm)
            if adam is not None:
                adam.step(arrays, grads)
            else:
                for k, g in grads.items():
                    arrays[k] -= hyper.lr * g
            if not all(np.all(np.isfinite(arrays[k])) for k in trainable):
                raise TrainingError(f"parameters became non-finite at epoch {epoch + 1}")
        result.losses.append(total / len(examples))
        log.debug("epoch %d loss %.4f", epoch + 1, result.losses[-1])
        if checkpoint_path is not None:
            save_checkpoint(params, checkpoint_path, digest)
    if checkpoint_path is not None and hyper.epochs == 0:
        save_checkpoint(params, checkpoint_path, digest)
    return result
