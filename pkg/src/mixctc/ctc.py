"""CTC loss (log-space forward-backward), brute-force oracle and greedy decoding."""

from __future__ import annotations

import itertools
import struct
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .tokenizer import LabelSequence, MixedVocab, collapse_units

# exp(-745) underflows to 0.0 in float64; anything below is treated as log-zero.
LOG_FLOOR = -745.0
BRUTE_FORCE_LIMIT = 10**7

PGRM_MAGIC = b"MXPG"
PGRM_VERSION = 1


class NoValidAlignment(ValueError):
    """Raised when no CTC path of the given length collapses to the labels."""


@dataclass(frozen=True)
class Posteriorgram:
    probs: np.ndarray
    blank_id: int

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=np.float64)
        if p.ndim != 2 or p.shape[0] < 1:
            raise ValueError(f"posteriorgram must be T x V with T >= 1, got shape {p.shape}")
        if not 0 <= self.blank_id < p.shape[1]:
            raise ValueError(f"blank id {self.blank_id} out of range for V={p.shape[1]}")
        if np.any(p < 0) or np.any(p > 1) or not np.all(np.isfinite(p)):
            raise ValueError("posteriors must lie in [0, 1]")
        if np.max(np.abs(p.sum(axis=1) - 1.0)) > 1e-6:
            raise ValueError("posteriorgram rows must sum to 1")
        object.__setattr__(self, "probs", p)

    @property
    def T(self) -> int:
        return self.probs.shape[0]

    @property
    def V(self) -> int:
        return self.probs.shape[1]

    def log_probs(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            lp = np.log(self.probs)
        lp[lp < LOG_FLOOR] = -np.inf
        return lp


@dataclass(frozen=True)
class CtcLossResult:
    loss: float
    grad_logits: np.ndarray


@dataclass(frozen=True)
class SpikeSegment:
    unit_id: int
    start: int
    end: int
    peak: int

    def __post_init__(self):
        if not self.start <= self.peak <= self.end:
            raise ValueError(f"bad segment: start={self.start} peak={self.peak} end={self.end}")

    @property
    def span(self) -> tuple[int, int]:
        return (self.start, self.end)


def min_frames(labels: Sequence[int]) -> int:
    """Shortest input that can emit ``labels``: one frame each plus a blank between repeats."""
    repeats = sum(1 for a, b in zip(labels, labels[1:]) if a == b)
    return len(labels) + repeats


def _ids(labels) -> list[int]:
    return list(labels.ids) if isinstance(labels, LabelSequence) else [int(i) for i in labels]


def ctc_forward_backward(log_probs, input_lengths, labels, blank):
    """Batched CTC in log space.

    ``log_probs``: (B, T, V) per-frame log posteriors. ``labels``: list of B
    label id sequences. Returns ``(log_likelihood (B,), occupancy (B, T, V))``
    where occupancy[b, t, k] is the posterior probability of emitting unit k at
    frame t, summed over lattice states. Frames past each input length get zero
    occupancy.
    """
    log_probs = np.asarray(log_probs, dtype=np.float64)
    B, T, V = log_probs.shape
    input_lengths = np.asarray(input_lengths, dtype=np.int64)
    label_lengths = np.array([len(l) for l in labels], dtype=np.int64)
    S = 2 * int(label_lengths.max(initial=0)) + 1

    ext = np.full((B, S), blank, dtype=np.int64)
    for b, l in enumerate(labels):
        if len(l):
            ext[b, 1:2 * len(l):2] = l
    state_len = 2 * label_lengths + 1
    valid_state = np.arange(S)[None, :] < state_len[:, None]

    # Skip transition s-2 -> s: only into a non-blank that differs from the label two back.
    skip = np.zeros((B, S), dtype=bool)
    if S > 2:
        skip[:, 2:] = (ext[:, 2:] != blank) & (ext[:, 2:] != ext[:, :-2])

    bidx = np.arange(B)[:, None]
    emit = log_probs[bidx, :, ext].transpose(0, 2, 1)  # (B, T, S)
    emit = np.where(emit < LOG_FLOOR, -np.inf, emit)

    neg_inf = -np.inf
    alpha = np.full((B, T, S), neg_inf)
    alpha[:, 0, 0] = emit[:, 0, 0]
    if S > 1:
        has_label = label_lengths > 0
        alpha[has_label, 0, 1] = emit[has_label, 0, 1]
    alpha[:, 0, :] = np.where(valid_state, alpha[:, 0, :], neg_inf)
    for t in range(1, T):
        prev = alpha[:, t - 1, :]
        acc = prev.copy()
        acc[:, 1:] = np.logaddexp(acc[:, 1:], prev[:, :-1])
        if S > 2:
            acc[:, 2:] = np.where(skip[:, 2:], np.logaddexp(acc[:, 2:], prev[:, :-2]), acc[:, 2:])
        cur = acc + emit[:, t, :]
        alpha[:, t, :] = np.where(valid_state, cur, neg_inf)

    last_t = input_lengths - 1
    b_all = np.arange(B)
    end_a = alpha[b_all, last_t, state_len - 1]
    end_b = np.where(state_len >= 2, alpha[b_all, last_t, np.maximum(state_len - 2, 0)], neg_inf)
    log_like = np.logaddexp(end_a, end_b)

    # beta[t, s]: log prob of frames t+1.. given state s at frame t (excludes frame t's emission).
    beta = np.full((B, T, S), neg_inf)
    init = np.full((B, S), neg_inf)
    init[b_all, state_len - 1] = 0.0
    has_two = state_len >= 2
    init[b_all[has_two], state_len[has_two] - 2] = 0.0
    skip_from = np.zeros((B, S), dtype=bool)
    if S > 2:
        skip_from[:, :-2] = skip[:, 2:]
    for t in range(T - 1, -1, -1):
        if t < T - 1:
            nxt = beta[:, t + 1, :] + emit[:, t + 1, :]
            acc = nxt.copy()
            acc[:, :-1] = np.logaddexp(acc[:, :-1], nxt[:, 1:])
            if S > 2:
                acc[:, :-2] = np.where(skip_from[:, :-2], np.logaddexp(acc[:, :-2], nxt[:, 2:]), acc[:, :-2])
            acc = np.where(valid_state, acc, neg_inf)
        else:
            acc = np.full((B, S), neg_inf)
        at_end = (last_t == t)[:, None]
        past_end = (t > last_t)[:, None]
        beta[:, t, :] = np.where(at_end, init, np.where(past_end, neg_inf, acc))

    with np.errstate(invalid="ignore"):
        log_occ = alpha + beta - log_like[:, None, None]
    state_occ = np.where(np.isfinite(log_occ), np.exp(log_occ), 0.0)
    state_occ = np.where(valid_state[:, None, :], state_occ, 0.0)
    onehot = np.zeros((B, S, V))
    onehot[bidx, np.arange(S)[None, :], ext] = 1.0
    occupancy = np.einsum("bts,bsv->btv", state_occ, onehot)
    return log_like, occupancy


def _check_feasible(T: int, ids: Sequence[int], blank: int) -> None:
    if not ids:
        raise ValueError("CTC labels must be non-empty")
    if blank in ids:
        raise ValueError("label sequence must not contain the blank id")
    need = min_frames(ids)
    if T < need:
        raise NoValidAlignment(f"no valid alignment: {len(ids)} labels need >= {need} frames, got T={T}")


def ctc_loss(post: Posteriorgram, labels) -> CtcLossResult:
    """Negative log-likelihood of ``labels`` and its gradient w.r.t. pre-softmax logits.

    The gradient assumes ``post`` rows are a softmax of the logits; it is the
    posterior minus the lattice occupancy of each unit.
    """
    ids = _ids(labels)
    _check_feasible(post.T, ids, post.blank_id)
    lp = post.log_probs()[None]
    log_like, occ = ctc_forward_backward(lp, [post.T], [ids], post.blank_id)
    if not np.isfinite(log_like[0]):
        raise NoValidAlignment("no valid alignment: every path has zero probability")
    return CtcLossResult(loss=float(-log_like[0]), grad_logits=post.probs - occ[0])


def ctc_loss_from_logits(logits: np.ndarray, labels, blank_id: int) -> CtcLossResult:
    logits = np.asarray(logits, dtype=np.float64)
    z = logits - logits.max(axis=-1, keepdims=True)
    lp = z - np.log(np.exp(z).sum(axis=-1, keepdims=True))
    ids = _ids(labels)
    _check_feasible(logits.shape[0], ids, blank_id)
    log_like, occ = ctc_forward_backward(lp[None], [logits.shape[0]], [ids], blank_id)
    if not np.isfinite(log_like[0]):
        raise NoValidAlignment("no valid alignment: every path has zero probability")
    return CtcLossResult(loss=float(-log_like[0]), grad_logits=np.exp(lp) - occ[0])


def collapse_path(path: Sequence[int], blank: int) -> list[int]:
    """Remove repeats, then blanks."""
    return [k for k, _ in itertools.groupby(path) if k != blank]


def brute_force_loss(post: Posteriorgram, labels) -> float:
    """-ln of the summed probability of every path collapsing to ``labels``.

    Enumerates all V**T paths, so only usable on tiny instances.
    """
    ids = _ids(labels)
    T, V = post.probs.shape
    if V**T > BRUTE_FORCE_LIMIT:
        raise ValueError(f"instance too large for enumeration: V^T = {V}^{T}")
    if len(ids) > T:
        raise NoValidAlignment(f"no valid alignment: {len(ids)} labels longer than T={T}")
    paths = np.array(list(itertools.product(range(V), repeat=T)), dtype=np.int64).reshape(-1, T)
    new_run = np.ones(paths.shape, dtype=bool)
    new_run[:, 1:] = paths[:, 1:] != paths[:, :-1]
    keep = new_run & (paths != post.blank_id)
    n_kept = keep.sum(axis=1)
    ok = n_kept == len(ids)
    if ids:
        target = np.asarray(ids)
        rank = np.cumsum(keep, axis=1) - 1
        rank_c = np.clip(rank, 0, len(ids) - 1)
        match = np.where(keep, paths == target[rank_c], True)
        ok &= match.all(axis=1)
    if not ok.any():
        raise NoValidAlignment("no valid alignment: no path collapses to the labels")
    probs = post.probs[np.arange(T)[None, :], paths[ok]].prod(axis=1)
    total = probs.sum()
    if total <= 0.0:
        raise NoValidAlignment("no valid alignment: every path has zero probability")
    return float(-np.log(total))


def greedy_decode(post: Posteriorgram) -> list[tuple[int, SpikeSegment]]:
    """Per-frame argmax, collapse repeat runs, drop blanks.

    Every surviving token keeps the frame span of its run and the frame within
    the run where its posterior peaks.
    """
    best = np.argmax(post.probs, axis=1)
    out: list[tuple[int, SpikeSegment]] = []
    t = 0
    T = len(best)
    while t < T:
        k = int(best[t])
        end = t
        while end + 1 < T and best[end + 1] == k:
            end += 1
        if k != post.blank_id:
            peak = t + int(np.argmax(post.probs[t:end + 1, k]))
            out.append((k, SpikeSegment(k, t, end, peak)))
        t = end + 1
    return out


def decode_to_words(post: Posteriorgram, vocab: MixedVocab) -> list[str]:
    units = [vocab.inventory.units[k] for k, _ in greedy_decode(post)]
    return collapse_units(units, vocab)


def write_posteriorgram(post: Posteriorgram, path) -> None:
    with open(path, "wb") as f:
        f.write(PGRM_MAGIC)
        f.write(struct.pack("<BIII", PGRM_VERSION, post.T, post.V, post.blank_id))
        f.write(post.probs.astype("<f4").tobytes(order="C"))


def read_posteriorgram(path) -> Posteriorgram:
    """Load a posteriorgram; rows are renormalized after the float32 round trip."""
    with open(path, "rb") as f:
        data = f.read()
    if data[:4] != PGRM_MAGIC:
        raise ValueError("not a posteriorgram file")
    version, T, V, blank = struct.unpack_from("<BIII", data, 4)
    if version != PGRM_VERSION:
        raise ValueError(f"unsupported posteriorgram version {version}")
    offset = 4 + struct.calcsize("<BIII")
    probs = np.frombuffer(data, dtype="<f4", count=T * V, offset=offset).astype(np.float64).reshape(T, V)
    probs = probs / probs.sum(axis=1, keepdims=True)
    return Posteriorgram(probs, blank)
