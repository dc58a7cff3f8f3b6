"""Attention CTC head.

For every output frame u a window of ``C = 2*tau + 1`` hidden vectors around u
is filtered by per-slot matrices (time convolution). Window slot ``j`` holds
frame ``t = u - tau + j`` and uses filter ``filters[j]`` (offset ``u - t =
tau - j``). Frames outside the utterance are zero vectors.

The context vector is either the plain sum of the filtered window (``mode ==
"none"``) or ``gamma * sum_j alpha_j * g_j`` where ``alpha`` comes from a
one-hidden-layer tanh scorer fed with the filtered window, a content query
(previous logits, or the implicit-LM state) and, in ``"hybrid"`` mode, a
convolution of the previous attention weights.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .cells import LSTMWeights, lstm_step, lstm_step_backward, sigmoid, softmax

MODES = ("none", "content", "hybrid")


@dataclass(frozen=True)
class AttentionConfig:
    tau: int = 4
    gamma: float | None = None
    mode: str = "hybrid"
    use_implicit_lm: bool = False
    vector_attention: bool = False
    loc_channels: int = 1
    lm_size: int = 16

    def __post_init__(self):
        if self.tau < 0:
            raise ValueError("tau must be >= 0")
        if self.mode not in MODES:
            raise ValueError(f"attention mode must be one of {MODES}, got {self.mode!r}")
        if self.gamma is not None and not self.gamma > 0:
            raise ValueError("gamma must be > 0")
        if self.loc_channels < 1 or self.lm_size < 1:
            raise ValueError("loc_channels and lm_size must be >= 1")

    @property
    def C(self) -> int:
        return 2 * self.tau + 1

    @property
    def scale(self) -> float:
        """gamma, defaulting to the window length."""
        return float(self.C if self.gamma is None else self.gamma)


@dataclass(frozen=True)
class FilteredSignals:
    g: np.ndarray  # (..., C, n)

    def __post_init__(self):
        if self.g.ndim < 2:
            raise ValueError("filtered signals need shape (..., C, n)")

    @property
    def C(self) -> int:
        return self.g.shape[-2]


@dataclass
class AttentionState:
    prev_alpha: np.ndarray
    prev_logits: np.ndarray
    prev_context: np.ndarray
    lm_h: np.ndarray | None = None
    lm_c: np.ndarray | None = None

    @classmethod
    def initial(cls, cfg: AttentionConfig, n: int, V: int, batch: tuple[int, ...] = ()) -> "AttentionState":
        shape = batch + ((cfg.C, n) if cfg.vector_attention else (cfg.C,))
        lm = np.zeros(batch + (cfg.lm_size,)) if cfg.use_implicit_lm else None
        return cls(
            prev_alpha=np.full(shape, 1.0 / cfg.C),
            prev_logits=np.zeros(batch + (V,)),
            prev_context=np.zeros(batch + (n,)),
            lm_h=lm,
            lm_c=None if lm is None else lm.copy(),
        )


@dataclass
class AttentionParams:
    filters: np.ndarray  # (C, n, Hd)
    w_g: np.ndarray  # (a, n)
    w_q: np.ndarray  # (a, q)
    b_a: np.ndarray  # (a,)
    w_loc: np.ndarray  # (a, m)
    loc_kernel: np.ndarray  # (m, C)
    score_w: np.ndarray  # (k, a), k = 1 for scalar weights, n for per-component weights
    score_b: np.ndarray  # (k,)
    lm: LSTMWeights | None = field(default=None)

    def arrays(self) -> list[tuple[str, np.ndarray]]:
        out = [
            ("filters", self.filters),
            ("w_g", self.w_g),
            ("w_q", self.w_q),
            ("b_a", self.b_a),
            ("w_loc", self.w_loc),
            ("loc_kernel", self.loc_kernel),
            ("score_w", self.score_w),
            ("score_b", self.score_b),
        ]
        if self.lm is not None:
            out += [(f"lm.{k}", v) for k, v in self.lm.arrays()]
        return out

    def copy(self) -> "AttentionParams":
        return AttentionParams(
            *(a.copy() for _, a in self.arrays()[:8]),
            lm=None if self.lm is None else self.lm.copy(),
        )

    @property
    def C(self) -> int:
        return self.filters.shape[0]

    @property
    def n(self) -> int:
        return self.filters.shape[1]


def init_attention(
    rng: np.random.Generator, cfg: AttentionConfig, hidden_dim: int, output_dim: int, scale: float = 0.05
) -> AttentionParams:
    """Scorer hidden width and filter output size both equal ``hidden_dim``."""
    n = a = hidden_dim
    C, m = cfg.C, cfg.loc_channels
    q = cfg.lm_size if cfg.use_implicit_lm else output_dim
    k = n if cfg.vector_attention else 1
    u = lambda *shape: rng.uniform(-scale, scale, size=shape)
    lm = LSTMWeights.init(rng, output_dim + n, cfg.lm_size, scale) if cfg.use_implicit_lm else None
    return AttentionParams(
        filters=u(C, n, hidden_dim),
        w_g=u(a, n),
        w_q=u(a, q),
        b_a=np.zeros(a),
        w_loc=u(a, m),
        loc_kernel=u(m, C),
        score_w=u(k, a),
        score_b=np.zeros(k),
        lm=lm,
    )


def time_convolution(h_window: np.ndarray, filters: np.ndarray) -> tuple[FilteredSignals, np.ndarray]:
    """Filter a window of hidden vectors and sum: ``g_j = W'_j h_j``, ``c = sum_j g_j``."""
    h_window = np.asarray(h_window, dtype=np.float64)
    if h_window.shape[-2] != filters.shape[0]:
        raise ValueError(f"window length {h_window.shape[-2]} != filter count C={filters.shape[0]}")
    if h_window.shape[-1] != filters.shape[2]:
        raise ValueError("hidden size does not match filters")
    g = np.einsum("...jh,jnh->...jn", h_window, filters)
    return FilteredSignals(g), g.sum(axis=-2)


def hidden_windows(H: np.ndarray, tau: int) -> np.ndarray:
    """(B, T, Hd) -> (B, T, C, Hd) zero-padded windows centred on every frame."""
    padded = np.pad(H, ((0, 0), (tau, tau), (0, 0)))
    win = sliding_window_view(padded, 2 * tau + 1, axis=1)  # (B, T, Hd, C)
    return np.swapaxes(win, -1, -2)


def weighted_context(alpha: np.ndarray, g: np.ndarray, gamma: float) -> np.ndarray:
    """``gamma * sum_j alpha_j * g_j`` for scalar ``(..., C)`` or vector ``(..., C, n)`` weights.

    The scale is folded into the weights before the sum so that uniform
    ``1/C`` weights with ``gamma = C`` reproduce the plain sum exactly.
    """
    w = gamma * alpha
    if w.ndim == g.ndim - 1:
        w = w[..., None]
    return (w * g).sum(axis=-2)


def component_context(alphas: np.ndarray, g: FilteredSignals | np.ndarray, gamma: float) -> np.ndarray:
    """Context from per-component weights ``alphas`` of shape ``(..., C, n)``."""
    g = g.g if isinstance(g, FilteredSignals) else np.asarray(g, dtype=np.float64)
    alphas = np.asarray(alphas, dtype=np.float64)
    if alphas.shape != g.shape:
        raise ValueError(f"per-component weights {alphas.shape} do not match signals {g.shape}")
    return weighted_context(alphas, g, gamma)


def _location_windows(loc_in: np.ndarray, C: int) -> np.ndarray:
    tau = (C - 1) // 2
    pad = [(0, 0)] * (loc_in.ndim - 1) + [(tau, tau)]
    return sliding_window_view(np.pad(loc_in, pad), C, axis=-1)  # (..., C slots, C taps)


def _attend(query, prev_alpha, g, params: AttentionParams, cfg: AttentionConfig):
    pre = g @ params.w_g.T + (query @ params.w_q.T)[..., None, :] + params.b_a
    loc = None
    if cfg.mode == "hybrid":
        loc_in = prev_alpha.mean(axis=-1) if cfg.vector_attention else prev_alpha
        win = _location_windows(loc_in, params.C)
        feats = np.einsum("...jk,mk->...jm", win, params.loc_kernel)
        pre = pre + feats @ params.w_loc.T
        loc = (win, feats)
    s = np.tanh(pre)
    e = s @ params.score_w.T + params.score_b
    if cfg.vector_attention:
        alpha = sigmoid(e)
    else:
        alpha = softmax(e[..., 0], axis=-1)
    return alpha, (query, g, s, alpha, loc)


def attend(state: AttentionState, g: FilteredSignals, cfg: AttentionConfig, params: AttentionParams) -> np.ndarray:
    """Attention weights over the window.

    The content query is the previous logits, or the implicit-LM state when
    ``cfg.use_implicit_lm`` is set. ``prev_alpha`` only matters in hybrid mode.
    """
    if cfg.mode not in ("content", "hybrid"):
        raise ValueError("attend() needs mode 'content' or 'hybrid'")
    query = state.lm_h if cfg.use_implicit_lm else state.prev_logits
    alpha, _ = _attend(query, state.prev_alpha, g.g, params, cfg)
    return alpha


def implicit_lm_step(prev: AttentionState, params: AttentionParams) -> tuple[np.ndarray, np.ndarray]:
    """Advance the LM recurrence on ``[prev_logits; prev_context]``; returns ``(h, c)``."""
    if params.lm is None or prev.lm_h is None:
        raise ValueError("implicit LM is not configured")
    x = np.concatenate([prev.prev_logits, prev.prev_context], axis=-1)
    h, c, _ = lstm_step(x, prev.lm_h, prev.lm_c, params.lm)
    return h, c


def output_projection(c_u: np.ndarray, w_soft: np.ndarray, b_soft: np.ndarray) -> np.ndarray:
    if c_u.shape[-1] != w_soft.shape[1] or w_soft.shape[0] != b_soft.shape[0]:
        raise ValueError(f"cannot project context of size {c_u.shape[-1]} with W_soft {w_soft.shape}")
    return softmax(c_u @ w_soft.T + b_soft)


@dataclass
class _AttnCache:
    H_shape: tuple
    windows: np.ndarray
    G: np.ndarray
    contexts: np.ndarray
    steps: list = field(default_factory=list)


def attention_forward(params: AttentionParams, cfg: AttentionConfig, H: np.ndarray, w_soft, b_soft):
    """Run the head over a batch of hidden sequences ``H`` (B, T, Hd).

    Returns ``(logits (B, T, V), cache)``. Exactly one output per input frame.
    """
    B, T, _ = H.shape
    windows = hidden_windows(H, cfg.tau)
    filtered, plain = time_convolution(windows, params.filters)
    G = filtered.g  # (B, T, C, n)
    gamma = cfg.scale
    if cfg.mode == "none":
        logits = plain @ w_soft.T + b_soft
        return logits, _AttnCache(H.shape, windows, G, plain)

    V = w_soft.shape[0]
    state = AttentionState.initial(cfg, params.n, V, (B,))
    contexts = np.zeros((B, T, params.n))
    logits = np.zeros((B, T, V))
    cache = _AttnCache(H.shape, windows, G, contexts)
    for u in range(T):
        lm_cache = None
        if cfg.use_implicit_lm:
            x = np.concatenate([state.prev_logits, state.prev_context], axis=-1)
            state.lm_h, state.lm_c, lm_cache = lstm_step(x, state.lm_h, state.lm_c, params.lm)
            query = state.lm_h
        else:
            query = state.prev_logits
        alpha, a_cache = _attend(query, state.prev_alpha, G[:, u], params, cfg)
        c = weighted_context(alpha, G[:, u], gamma)
        z = c @ w_soft.T + b_soft
        contexts[:, u] = c
        logits[:, u] = z
        cache.steps.append((lm_cache, a_cache, state.prev_alpha))
        state.prev_alpha, state.prev_logits, state.prev_context = alpha, z, c
    return logits, cache


def _attend_backward(dalpha, prev_alpha, a_cache, params: AttentionParams, cfg: AttentionConfig, grads):
    query, g, s, alpha, loc = a_cache
    if cfg.vector_attention:
        de = dalpha * alpha * (1.0 - alpha)
    else:
        de = (alpha * (dalpha - (alpha * dalpha).sum(axis=-1, keepdims=True)))[..., None]
    grads["score_w"] += np.einsum("bjk,bja->ka", de, s)
    grads["score_b"] += de.sum(axis=(0, 1))
    dpre = (de @ params.score_w) * (1.0 - s * s)
    grads["w_g"] += np.einsum("bja,bjn->an", dpre, g)
    grads["b_a"] += dpre.sum(axis=(0, 1))
    dg = dpre @ params.w_g
    dq_pre = dpre.sum(axis=1)
    grads["w_q"] += dq_pre.T @ query
    dquery = dq_pre @ params.w_q
    dprev = np.zeros_like(prev_alpha)
    if loc is not None:
        win, feats = loc
        grads["w_loc"] += np.einsum("bja,bjm->am", dpre, feats)
        dfeats = dpre @ params.w_loc
        grads["loc_kernel"] += np.einsum("bjm,bjk->mk", dfeats, win)
        dwin = np.einsum("bjm,mk->bjk", dfeats, params.loc_kernel)
        C = params.C
        tau = (C - 1) // 2
        dpad = np.zeros((dwin.shape[0], C + 2 * tau))
        for k in range(C):
            dpad[:, k:k + C] += dwin[:, :, k]
        dloc = dpad[:, tau:tau + C]
        if cfg.vector_attention:
            dprev = np.broadcast_to(dloc[..., None] / prev_alpha.shape[-1], prev_alpha.shape).copy()
        else:
            dprev = dloc
    return dquery, dprev, dg


def attention_backward(params: AttentionParams, cfg: AttentionConfig, cache: _AttnCache, dlogits, w_soft):
    """Gradients of the head. Returns ``(dH, grads, d_w_soft, d_b_soft)``."""
    grads = {name: np.zeros_like(a) for name, a in params.arrays()}
    B, T, _ = cache.H_shape
    gamma = cfg.scale
    contexts = cache.contexts
    if cfg.mode == "none":
        dwsoft = np.einsum("btv,btn->vn", dlogits, contexts)
        dbsoft = dlogits.sum(axis=(0, 1))
        dplain = dlogits @ w_soft
        dG = np.broadcast_to(dplain[:, :, None, :], cache.G.shape)
    else:
        dwsoft = np.zeros_like(w_soft)
        dbsoft = np.zeros(w_soft.shape[0])
        dG = np.zeros_like(cache.G)
        V, n = w_soft.shape[0], params.n
        dz_next = np.zeros((B, V))
        dc_next = np.zeros((B, n))
        dalpha_next = None
        dlm_h = dlm_c = None
        if cfg.use_implicit_lm:
            dlm_h = np.zeros((B, cfg.lm_size))
            dlm_c = np.zeros((B, cfg.lm_size))
        for u in range(T - 1, -1, -1):
            lm_cache, a_cache, prev_alpha = cache.steps[u]
            alpha = a_cache[3]
            G_u = cache.G[:, u]
            dz = dlogits[:, u] + dz_next
            dwsoft += dz.T @ contexts[:, u]
            dbsoft += dz.sum(axis=0)
            dc = dz @ w_soft + dc_next
            if cfg.vector_attention:
                dalpha = gamma * dc[:, None, :] * G_u
                dG[:, u] += gamma * alpha * dc[:, None, :]
            else:
                dalpha = gamma * np.einsum("bjn,bn->bj", G_u, dc)
                dG[:, u] += gamma * alpha[..., None] * dc[:, None, :]
            if dalpha_next is not None:
                dalpha = dalpha + dalpha_next
            dquery, dalpha_next, dg = _attend_backward(dalpha, prev_alpha, a_cache, params, cfg, grads)
            dG[:, u] += dg
            if cfg.use_implicit_lm:
                da, dx, dlm_h, dlm_c = lstm_step_backward(dquery + dlm_h, dlm_c, lm_cache, params.lm)
                x, h_prev = lm_cache[0], lm_cache[1]
                grads["lm.w_x"] += da.T @ x
                grads["lm.w_h"] += da.T @ h_prev
                grads["lm.b"] += da.sum(axis=0)
                dz_next, dc_next = dx[:, :V], dx[:, V:]
            else:
                dz_next = dquery
    # G[b, u, j] = filters[j] @ window[b, u, j]
    grads["filters"] += np.einsum("btjn,btjh->jnh", dG, cache.windows)
    dwin = np.einsum("btjn,jnh->btjh", dG, params.filters)
    tau = (params.C - 1) // 2
    dpad = np.zeros((B, T + 2 * tau, cache.H_shape[2]))
    for j in range(params.C):
        dpad[:, j:j + T] += dwin[:, :, j]
    dH = dpad[:, tau:tau + T]
    return dH, grads, dwsoft, dbsoft
