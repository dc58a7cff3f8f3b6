"""Feature files, manifests and plain-text transcript files."""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .network import FeatureSequence


@dataclass(frozen=True)
class Utterance:
    utt_id: str
    words: tuple[str, ...]
    feats: FeatureSequence


def write_features(frames: np.ndarray, path) -> None:
    """Header ``(T, D)`` as two little-endian u32, then row-major float32."""
    frames = np.asarray(frames)
    T, D = frames.shape
    with open(path, "wb") as f:
        f.write(struct.pack("<II", T, D))
        f.write(np.ascontiguousarray(frames, dtype="<f4").tobytes())


def read_features(path, utt_id: str = "") -> FeatureSequence:
    with open(path, "rb") as f:
        data = f.read()
    T, D = struct.unpack_from("<II", data)
    if len(data) != 8 + 4 * T * D:
        raise ValueError(f"{path}: size does not match header T={T} D={D}")
    frames = np.frombuffer(data, dtype="<f4", offset=8).astype(np.float64).reshape(T, D)
    return FeatureSequence(frames, utt_id)


def write_manifest(utts, manifest_path, feature_dir) -> None:
    """Write one feature file per utterance and a TSV ``id, path, transcript``.

    Paths in the manifest are relative to the manifest's directory.
    """
    manifest_path = Path(manifest_path)
    feature_dir = Path(feature_dir)
    feature_dir.mkdir(parents=True, exist_ok=True)
    lines = []
    for u in utts:
        fpath = feature_dir / f"{u.utt_id}.feat"
        write_features(u.feats.frames, fpath)
        rel = os.path.relpath(fpath, manifest_path.parent)
        lines.append(f"{u.utt_id}\t{rel}\t{' '.join(u.words)}\n")
    with open(manifest_path, "w", encoding="utf-8", newline="\n") as f:
        f.writelines(lines)


def read_manifest(manifest_path) -> list[Utterance]:
    manifest_path = Path(manifest_path)
    out = []
    with open(manifest_path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ValueError(f"{manifest_path}:{lineno}: expected 'id<TAB>path<TAB>transcript'")
            utt_id, rel, text = parts
            path = Path(rel) if os.path.isabs(rel) else manifest_path.parent / rel
            out.append(Utterance(utt_id, tuple(text.lower().split()), read_features(path, utt_id)))
    return out


def write_transcripts(pairs, path) -> None:
    """``id<TAB>words`` per line."""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for utt_id, words in pairs:
            f.write(f"{utt_id}\t{' '.join(words)}\n")


def read_transcripts(path) -> list[tuple[str, list[str]]]:
    """Read ``id<TAB>words`` lines; lines without a tab get their line number as id."""
    out = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if "\t" in line:
                utt_id, text = line.split("\t", 1)
            else:
                utt_id, text = str(lineno), line
            out.append((utt_id, text.split()))
    return out
