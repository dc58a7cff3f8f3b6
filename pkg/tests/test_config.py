from __future__ import annotations

import pytest

from mixctc.config import (
    OUTPUT_DIR_ENV,
    PRESETS,
    ExperimentConfig,
    apply_overrides,
    format_config,
    load_config,
    parse_config_text,
    resolve_output_dir,
)


def test_presets_validate():
    for name, cfg in PRESETS.items():
        if name != "large":
            cfg.validate()
    assert PRESETS["large"].min_count == 10 and PRESETS["large"].attention_tau == 4


def test_overrides_and_types():
    cfg = apply_overrides(ExperimentConfig(), {"epochs": "7", "lr": "0.5", "letter_orders": "1,3", "attention_lm": "yes", "synth.noise": "0.25", "synth.frames_per_unit": "2,4"})
    assert cfg.epochs == 7 and cfg.lr == 0.5 and cfg.letter_orders == (1, 3) and cfg.attention_lm is True
    assert cfg.synth.noise == 0.25 and cfg.synth.frames_per_unit == (2, 4)
    with pytest.raises(KeyError):
        apply_overrides(ExperimentConfig(), {"epochz": "1"})
    with pytest.raises(KeyError):
        apply_overrides(ExperimentConfig(), {"synth.nope": "1"})
    with pytest.raises(ValueError):
        apply_overrides(ExperimentConfig(), {"attention_lm": "maybe"})


def test_format_parse_round_trip():
    cfg = PRESETS["full"]
    assert apply_overrides(ExperimentConfig(), parse_config_text(format_config(cfg))) == cfg


def test_config_file_with_preset(tmp_path):
    path = tmp_path / "exp.cfg"
    path.write_text("# comment\npreset=tiny\nepochs = 2  # trailing\n")
    cfg = load_config(path)
    assert cfg.epochs == 2 and cfg.hidden == PRESETS["tiny"].hidden
    path.write_text("no equals sign\n")
    with pytest.raises(ValueError):
        load_config(path)


def test_validation_errors(tmp_path):
    with pytest.raises(FileNotFoundError):
        ExperimentConfig(train_manifest=str(tmp_path / "nope"), test_manifest=str(tmp_path / "nope")).validate()
    with pytest.raises(ValueError):
        ExperimentConfig(letter_orders=(4,)).validate()
    with pytest.raises(ValueError):
        ExperimentConfig(layers=1).validate()
    with pytest.raises(ValueError):
        ExperimentConfig(attention_systems=("words",)).validate()


def test_output_dir_from_environment(monkeypatch):
    monkeypatch.setenv(OUTPUT_DIR_ENV, "/tmp/somewhere")
    assert resolve_output_dir(ExperimentConfig()).output_dir == "/tmp/somewhere"
    monkeypatch.delenv(OUTPUT_DIR_ENV)
    assert resolve_output_dir(ExperimentConfig()).output_dir == "experiment_out"


def test_attention_config_mapping():
    cfg = ExperimentConfig(attention_tau=2, attention_mode="content")
    a = cfg.attention_config(implicit_lm=True)
    assert a.tau == 2 and a.mode == "content" and a.use_implicit_lm
