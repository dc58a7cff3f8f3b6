"""LSTM cell and softmax primitives shared by the network and attention code."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def sigmoid(x: np.ndarray) -> np.ndarray:
    # tanh form never overflows
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def softmax(z: np.ndarray, axis: int = -1) -> np.ndarray:
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def log_softmax(z: np.ndarray, axis: int = -1) -> np.ndarray:
    z = z - z.max(axis=axis, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=axis, keepdims=True))


@dataclass
class LSTMWeights:
    """One LSTM direction. Gate rows are stacked in the order i, f, g, o."""

    w_x: np.ndarray  # (4H, D)
    w_h: np.ndarray  # (4H, H)
    b: np.ndarray  # (4H,)

    @property
    def hidden(self) -> int:
        return self.w_h.shape[1]

    @property
    def input_dim(self) -> int:
        return self.w_x.shape[1]

    def copy(self) -> "LSTMWeights":
        return LSTMWeights(self.w_x.copy(), self.w_h.copy(), self.b.copy())

    def arrays(self) -> list[tuple[str, np.ndarray]]:
        return [("w_x", self.w_x), ("w_h", self.w_h), ("b", self.b)]

    @classmethod
    def init(cls, rng: np.random.Generator, input_dim: int, hidden: int, scale: float) -> "LSTMWeights":
        return cls(
            rng.uniform(-scale, scale, size=(4 * hidden, input_dim)),
            rng.uniform(-scale, scale, size=(4 * hidden, hidden)),
            rng.uniform(-scale, scale, size=(4 * hidden,)),
        )

    @classmethod
    def zeros(cls, input_dim: int, hidden: int) -> "LSTMWeights":
        return cls(np.zeros((4 * hidden, input_dim)), np.zeros((4 * hidden, hidden)), np.zeros(4 * hidden))


def gates_from_preact(a: np.ndarray):
    H = a.shape[-1] // 4
    s = sigmoid(a)
    return s[..., :H], s[..., H:2 * H], np.tanh(a[..., 2 * H:3 * H]), s[..., 3 * H:]


def lstm_step(x, h_prev, c_prev, w: LSTMWeights, xw=None):
    """One LSTM step. ``xw`` optionally supplies a precomputed ``x @ w_x.T``.

    Returns ``(h, c, cache)``; the cache feeds :func:`lstm_step_backward`.
    """
    a = (x @ w.w_x.T if xw is None else xw) + h_prev @ w.w_h.T + w.b
    i, f, g, o = gates_from_preact(a)
    c = f * c_prev + i * g
    tc = np.tanh(c)
    h = o * tc
    return h, c, (x, h_prev, c_prev, i, f, g, o, tc)


def lstm_step_backward(dh, dc, cache, w: LSTMWeights, need_dx: bool = True):
    """Backprop one step. Returns ``(da, dx, dh_prev, dc_prev)``; ``dx`` is None unless ``need_dx``.

    ``da`` is the gradient w.r.t. the stacked gate pre-activations; the caller
    accumulates the weight gradients from it.
    """
    x, h_prev, c_prev, i, f, g, o, tc = cache
    do = dh * tc
    dc = dc + dh * o * (1.0 - tc * tc)
    di = dc * g
    dg = dc * i
    df = dc * c_prev
    dc_prev = dc * f
    da = np.concatenate(
        [di * i * (1.0 - i), df * f * (1.0 - f), dg * (1.0 - g * g), do * o * (1.0 - o)], axis=-1
    )
    dx = da @ w.w_x if need_dx else None
    dh_prev = da @ w.w_h
    return da, dx, dh_prev, dc_prev
