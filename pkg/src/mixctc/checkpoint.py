"""Versioned binary checkpoints.

Layout (all little-endian)::

    magic       8 bytes  b"MXCTCKPT"
    version     u16
    input_dim, hidden, n_layers, output_dim, frozen   5 x u32
    vocab hash  32 bytes (sha256 of the vocabulary file text)
    n_tensors   u32, then per tensor: ndim u8, dims u32 * ndim, float32 data
    attention   u8 flag; if 1: tau u32, gamma f64 (0 = default), mode u8,
                implicit-LM u8, vector u8, loc_channels u32, lm_size u32,
                then n_tensors u32 and tensors as above

Tensors appear in :meth:`NetworkParams.named_arrays` order.
"""

from __future__ import annotations

import io
import struct

import numpy as np

from .attention import MODES, AttentionConfig, AttentionParams
from .cells import LSTMWeights
from .network import BiLSTMLayer, NetworkParams

MAGIC = b"MXCTCKPT"
VERSION = 1


class CheckpointError(ValueError):
    pass


def _write_tensor(f, a: np.ndarray) -> None:
    f.write(struct.pack("<B", a.ndim))
    f.write(struct.pack(f"<{a.ndim}I", *a.shape))
    f.write(np.ascontiguousarray(a, dtype="<f4").tobytes())


def _read_tensor(f) -> np.ndarray:
    (ndim,) = struct.unpack("<B", f.read(1))
    shape = struct.unpack(f"<{ndim}I", f.read(4 * ndim))
    count = int(np.prod(shape)) if ndim else 1
    raw = f.read(4 * count)
    if len(raw) != 4 * count:
        raise CheckpointError("truncated tensor data")
    a = np.frombuffer(raw, dtype="<f4").astype(np.float64).reshape(shape)
    if not np.all(np.isfinite(a)):
        raise CheckpointError("checkpoint contains NaN/Inf")
    return a


def dumps(params: NetworkParams, vocab_hash: bytes) -> bytes:
    if len(vocab_hash) != 32:
        raise CheckpointError("vocab hash must be 32 bytes")
    f = io.BytesIO()
    f.write(MAGIC)
    f.write(struct.pack("<H", VERSION))
    f.write(struct.pack("<5I", params.input_dim, params.hidden, params.n_layers, params.output_dim, params.frozen))
    f.write(vocab_hash)
    core = [a for name, a in params.named_arrays() if not name.startswith("attn.")]
    f.write(struct.pack("<I", len(core)))
    for a in core:
        _write_tensor(f, a)
    if params.attention is None:
        f.write(b"\x00")
    else:
        cfg = params.attention_config
        f.write(b"\x01")
        f.write(struct.pack("<Id", cfg.tau, 0.0 if cfg.gamma is None else cfg.gamma))
        f.write(struct.pack("<BBB", MODES.index(cfg.mode), cfg.use_implicit_lm, cfg.vector_attention))
        f.write(struct.pack("<II", cfg.loc_channels, cfg.lm_size))
        arrays = params.attention.arrays()
        f.write(struct.pack("<I", len(arrays)))
        for _, a in arrays:
            _write_tensor(f, a)
    return f.getvalue()


def loads(data: bytes, vocab_hash: bytes | None = None) -> NetworkParams:
    """Parse a checkpoint, checking the vocabulary hash when one is given."""
    try:
        return _loads(data, vocab_hash)
    except (struct.error, IndexError) as e:
        raise CheckpointError(f"truncated or malformed checkpoint: {e}") from e


def _loads(data: bytes, vocab_hash: bytes | None) -> NetworkParams:
    f = io.BytesIO(data)
    if f.read(8) != MAGIC:
        raise CheckpointError("not a checkpoint file")
    (version,) = struct.unpack("<H", f.read(2))
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    input_dim, hidden, n_layers, output_dim, frozen = struct.unpack("<5I", f.read(20))
    stored_hash = f.read(32)
    if vocab_hash is not None and stored_hash != vocab_hash:
        raise CheckpointError("checkpoint was trained with a different vocabulary (hash mismatch)")
    (n_tensors,) = struct.unpack("<I", f.read(4))
    if n_tensors != 6 * n_layers + 2:
        raise CheckpointError(f"expected {6 * n_layers + 2} tensors, found {n_tensors}")
    tensors = [_read_tensor(f) for _ in range(n_tensors)]
    layers = []
    for i in range(n_layers):
        t = tensors[6 * i:6 * i + 6]
        layers.append(BiLSTMLayer(LSTMWeights(*t[:3]), LSTMWeights(*t[3:])))
    w_soft, b_soft = tensors[-2:]
    attn = cfg = None
    (flag,) = struct.unpack("<B", f.read(1))
    if flag:
        tau, gamma = struct.unpack("<Id", f.read(12))
        mode, lm, vec = struct.unpack("<BBB", f.read(3))
        loc_channels, lm_size = struct.unpack("<II", f.read(8))
        cfg = AttentionConfig(
            tau=tau, gamma=None if gamma == 0.0 else gamma, mode=MODES[mode],
            use_implicit_lm=bool(lm), vector_attention=bool(vec), loc_channels=loc_channels, lm_size=lm_size,
        )
        (n_attn,) = struct.unpack("<I", f.read(4))
        at = [_read_tensor(f) for _ in range(n_attn)]
        lm_w = LSTMWeights(*at[8:11]) if cfg.use_implicit_lm else None
        attn = AttentionParams(*at[:8], lm=lm_w)
    if f.read(1):
        raise CheckpointError("trailing bytes after checkpoint")
    try:
        params = NetworkParams(layers, w_soft, b_soft, attn, cfg, frozen)
    except ValueError as e:
        raise CheckpointError(str(e)) from e
    if (params.input_dim, params.hidden, params.output_dim) != (input_dim, hidden, output_dim):
        raise CheckpointError("header dims disagree with tensor shapes")
    return params


def save_checkpoint(params: NetworkParams, path, vocab_hash: bytes) -> None:
    data = dumps(params, vocab_hash)
    with open(path, "wb") as f:
        f.write(data)


def load_checkpoint(path, vocab_hash: bytes | None = None) -> NetworkParams:
    with open(path, "rb") as f:
        return loads(f.read(), vocab_hash)


def read_vocab_hash(path) -> bytes:
    with open(path, "rb") as f:
        head = f.read(8 + 2 + 20 + 32)
    if head[:8] != MAGIC:
        raise CheckpointError("not a checkpoint file")
    return head[30:62]
