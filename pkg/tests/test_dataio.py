from __future__ import annotations

import numpy as np
import pytest

from mixctc.dataio import Utterance, read_features, read_manifest, read_transcripts, write_features, write_manifest, write_transcripts
from mixctc.network import FeatureSequence


def test_feature_round_trip(tmp_path):
    x = np.random.default_rng(0).standard_normal((5, 3)).astype(np.float32)
    write_features(x, tmp_path / "a.feat")
    np.testing.assert_array_equal(read_features(tmp_path / "a.feat").frames, x)
    (tmp_path / "bad.feat").write_bytes((tmp_path / "a.feat").read_bytes()[:-4])
    with pytest.raises(ValueError):
        read_features(tmp_path / "bad.feat")


def test_manifest_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    utts = [Utterance(f"u{i}", ("ab", "cd"), FeatureSequence(rng.standard_normal((4, 2)).astype(np.float32))) for i in range(3)]
    write_manifest(utts, tmp_path / "m.tsv", tmp_path / "feats")
    back = read_manifest(tmp_path / "m.tsv")
    assert [u.utt_id for u in back] == ["u0", "u1", "u2"]
    assert back[1].words == ("ab", "cd")
    np.testing.assert_array_equal(back[2].feats.frames, utts[2].feats.frames)
    (tmp_path / "bad.tsv").write_text("u0\tonly-two\n")
    with pytest.raises(ValueError):
        read_manifest(tmp_path / "bad.tsv")


def test_transcripts(tmp_path):
    write_transcripts([("a", ["x", "y"]), ("b", [])], tmp_path / "t.txt")
    assert read_transcripts(tmp_path / "t.txt") == [("a", ["x", "y"]), ("b", [])]
    (tmp_path / "plain.txt").write_text("x y\nz\n")
    assert read_transcripts(tmp_path / "plain.txt") == [("1", ["x", "y"]), ("2", ["z"])]
