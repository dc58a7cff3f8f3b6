"""Experiment configuration, named presets and the key=value config file format."""

from __future__ import annotations

import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .attention import AttentionConfig
from .synth import SyntheticCorpusSpec

OUTPUT_DIR_ENV = "MIXCTC_OUTPUT_DIR"


@dataclass(frozen=True)
class ExperimentConfig:
    min_count: int = 2
    letter_orders: tuple[int, ...] = (1, 2, 3)
    mixed_letter_orders: tuple[int, ...] = (3,)
    hybrid_letter_order: int = 3
    hidden: int = 32
    layers: int = 2
    epochs: int = 40
    lr: float = 0.1
    batch_size: int = 32
    clip_norm: float = 5.0
    optimizer: str = "sgd"
    seed: int = 0
    attention_tau: int = 1
    attention_mode: str = "hybrid"
    attention_lm: bool = False
    attention_vector: bool = False
    attention_systems: tuple[str, ...] = ()  # any of "letters", "mixed"
    synth: SyntheticCorpusSpec = field(default_factory=SyntheticCorpusSpec)
    train_manifest: str = ""
    test_manifest: str = ""
    output_dir: str = "experiment_out"

    def attention_config(self, implicit_lm: bool | None = None) -> AttentionConfig:
        return AttentionConfig(
            tau=self.attention_tau,
            mode=self.attention_mode,
            use_implicit_lm=self.attention_lm if implicit_lm is None else implicit_lm,
            vector_attention=self.attention_vector,
        )

    def validate(self) -> None:
        for p in (self.train_manifest, self.test_manifest):
            if p and not Path(p).exists():
                raise FileNotFoundError(f"corpus path does not exist: {p}")
        if bool(self.train_manifest) != bool(self.test_manifest):
            raise ValueError("give both train_manifest and test_manifest, or neither")
        for n in self.letter_orders + self.mixed_letter_orders + (self.hybrid_letter_order,):
            if n not in (1, 2, 3):
                raise ValueError(f"letter order {n} not in 1..3")
        if self.layers < 2:
            raise ValueError("hybrid CTC needs at least 2 LSTM layers")
        bad = set(self.attention_systems) - {"letters", "mixed"}
        if bad:
            raise ValueError(f"unknown attention systems {sorted(bad)}")
        self.synth.validate()


PRESETS: dict[str, ExperimentConfig] = {
    # 500 train utterances, 50-word lexicon, 10% OOV test utterances.
    # Adam: with plain SGD the word model is still at 100% WER after 50 epochs.
    "toy": ExperimentConfig(optimizer="adam", lr=0.01),
    # seconds-scale run for smoke and determinism checks
    "tiny": ExperimentConfig(
        optimizer="adam",
        lr=0.01,
        hidden=8,
        epochs=3,
        batch_size=8,
        letter_orders=(1, 3),
        synth=SyntheticCorpusSpec(lexicon_size=8, n_train=24, n_test=8, n_rare=4, n_suffixes=3, feature_dim=8),
    ),
    # toy data with every comparison row, including attention variants
    "full": ExperimentConfig(
        optimizer="adam",
        lr=0.01,
        mixed_letter_orders=(1, 2, 3),
        attention_systems=("letters", "mixed"),
    ),
    # Large-vocabulary setting (6x512 BiLSTM, 240-dim features); far beyond desk scale.
    "large": ExperimentConfig(
        min_count=10,
        hidden=512,
        layers=6,
        attention_tau=4,
        attention_systems=("letters", "mixed"),
        mixed_letter_orders=(1, 2, 3),
        synth=SyntheticCorpusSpec(feature_dim=240),
    ),
}


def _coerce(value: str, typ, current):
    if isinstance(current, bool):
        if value.lower() in ("1", "true", "yes", "on"):
            return True
        if value.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {value!r}")
    if isinstance(current, tuple):
        items = [v for v in (s.strip() for s in value.split(",")) if v]
        return tuple(int(v) for v in items) if "int" in str(typ) else tuple(items)
    if isinstance(current, int):
        return int(value)
    if isinstance(current, float):
        return float(value)
    return value


def apply_overrides(cfg: ExperimentConfig, items: dict[str, str]) -> ExperimentConfig:
    """Apply ``key=value`` settings; ``synth.<field>`` keys address the corpus spec."""
    top = {f.name: f for f in fields(ExperimentConfig)}
    syn = {f.name: f for f in fields(SyntheticCorpusSpec)}
    changes: dict = {}
    synth_changes: dict = {}
    for key, value in items.items():
        if key.startswith("synth."):
            name = key[len("synth."):]
            if name not in syn:
                raise KeyError(f"unknown config key {key!r}")
            synth_changes[name] = _coerce(value, syn[name].type, getattr(cfg.synth, name))
        elif key in top and key != "synth":
            changes[key] = _coerce(value, top[key].type, getattr(cfg, key))
        else:
            raise KeyError(f"unknown config key {key!r}")
    if synth_changes:
        changes["synth"] = replace(cfg.synth, **synth_changes)
    return replace(cfg, **changes)


def parse_config_text(text: str) -> dict[str, str]:
    items = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected key=value")
        k, v = line.split("=", 1)
        items[k.strip()] = v.strip()
    return items


def load_config(path, base: ExperimentConfig | None = None) -> ExperimentConfig:
    with open(path, encoding="utf-8") as f:
        items = parse_config_text(f.read())
    preset = items.pop("preset", None)
    if base is None:
        base = PRESETS[preset] if preset else ExperimentConfig()
    return apply_overrides(base, items)


def resolve_output_dir(cfg: ExperimentConfig) -> ExperimentConfig:
    env = os.environ.get(OUTPUT_DIR_ENV)
    return replace(cfg, output_dir=env) if env else cfg


def format_config(cfg: ExperimentConfig) -> str:
    lines = []
    for f in fields(ExperimentConfig):
        v = getattr(cfg, f.name)
        if f.name == "synth":
            for sf in fields(SyntheticCorpusSpec):
                sv = getattr(v, sf.name)
                lines.append(f"synth.{sf.name}={_fmt(sv)}")
        else:
            lines.append(f"{f.name}={_fmt(v)}")
    return "\n".join(lines) + "\n"


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ",".join(str(x) for x in v)
    return str(v)

