"""Bidirectional LSTM stack with a softmax (or attention) output layer.

Everything runs on padded batches ``X (B, T, D)`` with per-utterance lengths.
The backward direction is run on each utterance reversed within its own
length, so padding never leaks into valid frames.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .attention import AttentionConfig, AttentionParams, attention_backward, attention_forward, init_attention
from .cells import LSTMWeights, log_softmax, lstm_step, lstm_step_backward, softmax
from .ctc import Posteriorgram

INIT_SCALE = 0.05


@dataclass
class BiLSTMLayer:
    fwd: LSTMWeights
    bwd: LSTMWeights

    def copy(self) -> "BiLSTMLayer":
        return BiLSTMLayer(self.fwd.copy(), self.bwd.copy())


@dataclass
class NetworkParams:
    """Layer ``i < frozen`` is excluded from training."""

    layers: list[BiLSTMLayer]
    w_soft: np.ndarray  # (V, 2H)
    b_soft: np.ndarray  # (V,)
    attention: AttentionParams | None = None
    attention_config: AttentionConfig | None = None
    frozen: int = 0

    def __post_init__(self):
        self.validate()

    @property
    def input_dim(self) -> int:
        return self.layers[0].fwd.input_dim

    @property
    def hidden(self) -> int:
        return self.layers[0].fwd.hidden

    @property
    def output_dim(self) -> int:
        return self.w_soft.shape[0]

    @property
    def n_layers(self) -> int:
        return len(self.layers)

    def named_arrays(self) -> list[tuple[str, np.ndarray]]:
        out = []
        for i, layer in enumerate(self.layers):
            for dname, d in (("fwd", layer.fwd), ("bwd", layer.bwd)):
                out += [(f"layer{i}.{dname}.{k}", v) for k, v in d.arrays()]
        out += [("soft.w", self.w_soft), ("soft.b", self.b_soft)]
        if self.attention is not None:
            out += [(f"attn.{k}", v) for k, v in self.attention.arrays()]
        return out

    def trainable_names(self) -> list[str]:
        frozen = {f"layer{i}." for i in range(self.frozen)}
        return [n for n, _ in self.named_arrays() if not any(n.startswith(p) for p in frozen)]

    def copy(self) -> "NetworkParams":
        return NetworkParams(
            [layer.copy() for layer in self.layers],
            self.w_soft.copy(),
            self.b_soft.copy(),
            None if self.attention is None else self.attention.copy(),
            self.attention_config,
            self.frozen,
        )

    def validate(self) -> None:
        if not self.layers:
            raise ValueError("network needs at least one LSTM layer")
        H = self.hidden
        in_dim = self.input_dim
        for i, layer in enumerate(self.layers):
            for d in (layer.fwd, layer.bwd):
                if d.w_x.shape != (4 * H, in_dim) or d.w_h.shape != (4 * H, H) or d.b.shape != (4 * H,):
                    raise ValueError(f"layer {i}: inconsistent LSTM weight shapes")
            in_dim = 2 * H
        if self.w_soft.shape[1] != 2 * H or self.b_soft.shape != (self.w_soft.shape[0],):
            raise ValueError("softmax weights do not match the top layer")
        if (self.attention is None) != (self.attention_config is None):
            raise ValueError("attention params and config must be given together")
        if self.attention is not None:
            cfg = self.attention_config
            if self.attention.filters.shape != (cfg.C, 2 * H, 2 * H):
                raise ValueError("attention filters do not match config/hidden size")
        if not 0 <= self.frozen < len(self.layers):
            raise ValueError("frozen layer count out of range")
        for name, a in self.named_arrays():
            if not np.all(np.isfinite(a)):
                raise ValueError(f"non-finite values in {name}")


@dataclass(frozen=True)
class FeatureSequence:
    frames: np.ndarray  # (T, D)
    utt_id: str = ""

    def __post_init__(self):
        f = np.asarray(self.frames, dtype=np.float64)
        if f.ndim != 2 or f.shape[0] < 1:
            raise ValueError(f"features must be T x D with T >= 1, got {f.shape}")
        if np.isnan(f).any():
            raise ValueError(f"NaN in features of {self.utt_id!r}")
        object.__setattr__(self, "frames", f)

    @property
    def T(self) -> int:
        return self.frames.shape[0]


def init_network(
    rng: np.random.Generator,
    input_dim: int,
    hidden: int,
    n_layers: int,
    output_dim: int,
    attention: AttentionConfig | None = None,
    scale: float = INIT_SCALE,
) -> NetworkParams:
    layers = []
    in_dim = input_dim
    for _ in range(n_layers):
        layers.append(BiLSTMLayer(LSTMWeights.init(rng, in_dim, hidden, scale), LSTMWeights.init(rng, in_dim, hidden, scale)))
        in_dim = 2 * hidden
    w_soft = rng.uniform(-scale, scale, size=(output_dim, 2 * hidden))
    b_soft = np.zeros(output_dim)
    attn = init_attention(rng, attention, 2 * hidden, output_dim, scale) if attention is not None else None
    return NetworkParams(layers, w_soft, b_soft, attn, attention)


def pad_batch(feats: Sequence[FeatureSequence]) -> tuple[np.ndarray, np.ndarray]:
    lengths = np.array([f.T for f in feats], dtype=np.int64)
    D = feats[0].frames.shape[1]
    X = np.zeros((len(feats), int(lengths.max()), D))
    for b, f in enumerate(feats):
        if f.frames.shape[1] != D:
            raise ValueError("feature dimension differs within batch")
        X[b, : f.T] = f.frames
    return X, lengths


def _reverse_index(lengths: np.ndarray, T: int) -> np.ndarray:
    t = np.arange(T)[None, :]
    L = lengths[:, None]
    return np.where(t < L, L - 1 - t, t)


def _flat(a: np.ndarray) -> np.ndarray:
    return a.reshape(-1, a.shape[-1])


def _run_direction(w: LSTMWeights, X: np.ndarray):
    B, T, _ = X.shape
    H = w.hidden
    XW = X @ w.w_x.T
    h = np.zeros((B, H))
    c = np.zeros((B, H))
    hs = np.zeros((B, T, H))
    caches = []
    for t in range(T):
        h, c, cache = lstm_step(X[:, t], h, c, w, xw=XW[:, t])
        hs[:, t] = h
        caches.append(cache)
    return hs, caches


def _direction_backward(w: LSTMWeights, X: np.ndarray, caches, dHs: np.ndarray, need_dx: bool):
    B, T, _ = X.shape
    H = w.hidden
    dh = np.zeros((B, H))
    dc = np.zeros((B, H))
    das = np.zeros((B, T, 4 * H))
    for t in range(T - 1, -1, -1):
        da, _, dh, dc = lstm_step_backward(dHs[:, t] + dh, dc, caches[t], w, need_dx=False)
        das[:, t] = da
    h_prev = np.stack([c[1] for c in caches], axis=1)
    grads = {
        "w_x": _flat(das).T @ _flat(X),
        "w_h": _flat(das).T @ _flat(h_prev),
        "b": das.sum(axis=(0, 1)),
    }
    dX = das @ w.w_x if need_dx else None
    return grads, dX


@dataclass
class ForwardCache:
    lengths: np.ndarray
    mask: np.ndarray
    layer_inputs: list = field(default_factory=list)
    dir_caches: list = field(default_factory=list)
    top: np.ndarray | None = None
    attn_cache: object = None


def _layer_forward(layer: BiLSTMLayer, X: np.ndarray, lengths: np.ndarray, mask: np.ndarray):
    B, T, _ = X.shape
    rev = _reverse_index(lengths, T)
    bidx = np.arange(B)[:, None]
    Xr = X[bidx, rev]
    hf, cf = _run_direction(layer.fwd, X)
    hb_r, cb = _run_direction(layer.bwd, Xr)
    hb = hb_r[bidx, rev]
    Y = np.concatenate([hf, hb], axis=-1) * mask[..., None]
    return Y, (Xr, rev, cf, cb)


def forward_batch(params: NetworkParams, X: np.ndarray, lengths: np.ndarray, keep_cache: bool = True):
    """Logits (B, T, V) for a padded batch, plus the cache needed by :func:`backward`."""
    if X.shape[2] != params.input_dim:
        raise ValueError(f"feature dim {X.shape[2]} != network input size {params.input_dim}")
    B, T, _ = X.shape
    lengths = np.asarray(lengths, dtype=np.int64)
    mask = (np.arange(T)[None, :] < lengths[:, None]).astype(np.float64)
    cache = ForwardCache(lengths, mask)
    h = X
    for layer in params.layers:
        y, dcache = _layer_forward(layer, h, lengths, mask)
        if keep_cache:
            cache.layer_inputs.append(h)
            cache.dir_caches.append(dcache)
        h = y
    cache.top = h
    if params.attention is not None:
        logits, cache.attn_cache = attention_forward(params.attention, params.attention_config, h, params.w_soft, params.b_soft)
    else:
        logits = h @ params.w_soft.T + params.b_soft
    return logits, (cache if keep_cache else None)


def backward(params: NetworkParams, cache: ForwardCache | None, grad_logits: np.ndarray) -> dict[str, np.ndarray]:
    """Backprop through time. Gradients are returned only for trainable arrays."""
    if cache is None or not cache.layer_inputs:
        raise ValueError("backward() needs the cache of a forward pass (call forward_batch first)")
    mask = cache.mask
    dZ = grad_logits * mask[..., None]
    grads: dict[str, np.ndarray] = {}
    if params.attention is not None:
        dH, agrads, dws, dbs = attention_backward(params.attention, params.attention_config, cache.attn_cache, dZ, params.w_soft)
        grads.update({f"attn.{k}": v for k, v in agrads.items()})
    else:
        dws = _flat(dZ).T @ _flat(cache.top)
        dbs = dZ.sum(axis=(0, 1))
        dH = dZ @ params.w_soft
    grads["soft.w"] = dws
    grads["soft.b"] = dbs

    H = params.hidden
    B = mask.shape[0]
    bidx = np.arange(B)[:, None]
    for i in range(params.n_layers - 1, params.frozen - 1, -1):
        layer = params.layers[i]
        X = cache.layer_inputs[i]
        Xr, rev, cf, cb = cache.dir_caches[i]
        dY = dH * mask[..., None]
        need_dx = i > params.frozen
        gf, dXf = _direction_backward(layer.fwd, X, cf, dY[..., :H], need_dx)
        gb, dXb_r = _direction_backward(layer.bwd, Xr, cb, dY[..., H:][bidx, rev], need_dx)
        for k, v in gf.items():
            grads[f"layer{i}.fwd.{k}"] = v
        for k, v in gb.items():
            grads[f"layer{i}.bwd.{k}"] = v
        if need_dx:
            dH = dXf + dXb_r[bidx, rev]
    return grads


def forward(params: NetworkParams, feats: FeatureSequence, blank_id: int | None = None) -> Posteriorgram:
    logits, _ = forward_batch(params, feats.frames[None], np.array([feats.T]), keep_cache=False)
    probs = softmax(logits[0])
    return Posteriorgram(probs, params.output_dim - 1 if blank_id is None else blank_id)


def forward_many(params: NetworkParams, feats: Sequence[FeatureSequence], batch_size: int = 64) -> list[Posteriorgram]:
    out = []
    for start in range(0, len(feats), batch_size):
        chunk = feats[start:start + batch_size]
        X, lengths = pad_batch(chunk)
        logits, _ = forward_batch(params, X, lengths, keep_cache=False)
        probs = softmax(logits)
        out += [Posteriorgram(probs[b, : lengths[b]], params.output_dim - 1) for b in range(len(chunk))]
    return out


def hidden_outputs(params: NetworkParams, feats: FeatureSequence, upto: int | None = None) -> list[np.ndarray]:
    """Outputs of each LSTM layer (T, 2H), bottom first, optionally only the first ``upto``."""
    X = feats.frames[None]
    lengths = np.array([feats.T])
    mask = np.ones((1, feats.T))
    outs = []
    h = X
    for layer in params.layers[: upto if upto is not None else params.n_layers]:
        h, _ = _layer_forward(layer, h, lengths, mask)
        outs.append(h[0])
    return outs


def log_posteriors(logits: np.ndarray) -> np.ndarray:
    return log_softmax(logits)


def derive_letter_model(
    word_model: NetworkParams,
    letter_vocab,
    rng: np.random.Generator,
    attention: AttentionConfig | None = None,
    scale: float = INIT_SCALE,
) -> NetworkParams:
    """Letter model sharing the bottom L-1 layers of ``word_model``.

    The shared layers are copied and marked frozen; a new bidirectional LSTM
    layer and a softmax sized to ``letter_vocab`` go on top.
    """
    L = word_model.n_layers
    if L < 2:
        raise ValueError(f"word model needs at least 2 layers to share L-1 of them, has {L}")
    H = word_model.hidden
    shared = [copy.deepcopy(layer) for layer in word_model.layers[: L - 1]]
    new_layer = BiLSTMLayer(LSTMWeights.init(rng, 2 * H, H, scale), LSTMWeights.init(rng, 2 * H, H, scale))
    V = len(letter_vocab)
    w_soft = rng.uniform(-scale, scale, size=(V, 2 * H))
    attn = init_attention(rng, attention, 2 * H, V, scale) if attention is not None else None
    return NetworkParams(shared + [new_layer], w_soft, np.zeros(V), attn, attention, frozen=L - 1)
