from __future__ import annotations

import hashlib

import numpy as np
import pytest

from mixctc.attention import AttentionConfig
from mixctc.checkpoint import CheckpointError, dumps, load_checkpoint, loads, read_vocab_hash, save_checkpoint
from mixctc.network import init_network

HASH = hashlib.sha256(b"vocab").digest()


@pytest.mark.parametrize(
    "attn",
    [None, AttentionConfig(tau=1, gamma=2.5, mode="content"), AttentionConfig(tau=2, use_implicit_lm=True, vector_attention=True, lm_size=3)],
    ids=["plain", "content", "vector-lm"],
)
def test_round_trip(tmp_path, attn):
    p = init_network(np.random.default_rng(0), 3, 4, 2, 6, attn)
    p.frozen = 1
    save_checkpoint(p, tmp_path / "m.ckpt", HASH)
    back = load_checkpoint(tmp_path / "m.ckpt", HASH)
    assert back.frozen == 1 and back.attention_config == attn
    for (n1, a1), (n2, a2) in zip(p.named_arrays(), back.named_arrays()):
        assert n1 == n2
        np.testing.assert_array_equal(a2, a1.astype(np.float32))
    assert read_vocab_hash(tmp_path / "m.ckpt") == HASH
    # float32 values survive a second trip bit-exactly
    assert dumps(back, HASH) == (tmp_path / "m.ckpt").read_bytes()


def test_header_is_little_endian():
    data = dumps(init_network(np.random.default_rng(0), 3, 4, 2, 6), HASH)
    assert data[:8] == b"MXCTCKPT"
    assert data[8:10] == b"\x01\x00"
    assert data[10:14] == (3).to_bytes(4, "little")


def test_vocab_hash_mismatch():
    data = dumps(init_network(np.random.default_rng(0), 3, 4, 2, 6), HASH)
    with pytest.raises(CheckpointError, match="vocabulary"):
        loads(data, hashlib.sha256(b"other").digest())


def test_corrupt_inputs():
    data = dumps(init_network(np.random.default_rng(0), 3, 4, 2, 6), HASH)
    with pytest.raises(CheckpointError):
        loads(b"NOTACKPT" + data[8:])
    with pytest.raises(CheckpointError):
        loads(data[:-7])
    with pytest.raises(CheckpointError):
        loads(data + b"\x00")
    with pytest.raises(CheckpointError):
        loads(data[:8] + b"\x09\x00" + data[10:])
    with pytest.raises(CheckpointError):
        dumps(init_network(np.random.default_rng(0), 3, 4, 2, 6), b"short")


def test_nan_tensor_rejected():
    data = bytearray(dumps(init_network(np.random.default_rng(0), 3, 4, 2, 6), HASH))
    start = 8 + 2 + 20 + 32 + 4 + 1 + 8  # first tensor's data
    data[start:start + 4] = np.array([np.nan], dtype="<f4").tobytes()
    with pytest.raises(CheckpointError, match="NaN"):
        loads(bytes(data))
