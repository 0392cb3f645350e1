"""Config resolution: defaults, presets, files, overrides, env seed."""

import pytest

from adrflow.config import (PRESETS, SEED_ENV_VAR, config_hash, load_run_config,
                            parse_override, resolve_config, write_manifest)
from adrflow.errors import ConfigError


def test_defaults_resolve_and_build():
    run = load_run_config()
    assert run.model.hidden_channels == 8
    assert run.train.batch_size == 64
    assert run.eval.rollout == (5, 10, 20, 50)


def test_swe_like_preset_values():
    run = load_run_config(preset="swe-like")
    assert run.model.layer_count == 1
    assert run.model.hidden_channels == 128
    assert run.train.learning_rate == 1e-4
    assert run.train.batch_size == 64
    assert run.train.epochs == 200
    assert run.train.scheduler == "none"


def test_video_like_preset_values():
    run = load_run_config(preset="video-like")
    assert run.model.layer_count == 8
    assert run.model.hidden_channels == 192
    assert run.train.learning_rate == 2e-6
    assert run.train.batch_size == 16
    assert run.train.scheduler == "exponential"


def test_unknown_preset_and_unknown_key_rejected(tmp_path):
    with pytest.raises(ConfigError):
        load_run_config(preset="nope")
    cfg = tmp_path / "c.yaml"
    cfg.write_text("model:\n  layers: 3\n")  # wrong key name
    with pytest.raises(ConfigError) as err:
        load_run_config(config_path=cfg)
    assert "model.layers" in str(err.value)


def test_config_file_and_override_priority(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("model:\n  hidden_channels: 32\ntrain:\n  lr: 5.0e-4\n")
    run = load_run_config(config_path=cfg, preset="swe-like",
                          overrides=["train.lr=7e-4"])
    assert run.model.hidden_channels == 32      # file beats preset
    assert run.train.learning_rate == 7e-4      # flag beats file


def test_override_parsing_types():
    assert parse_override("train.epochs=12") == {"train": {"epochs": 12}}
    assert parse_override("model.fused_dr=true") == {"model": {"fused_dr": True}}
    with pytest.raises(ConfigError):
        parse_override("no_equals_sign")
    with pytest.raises(ConfigError):
        parse_override("toplevel=3")


def test_env_seed_override():
    run = load_run_config(env={SEED_ENV_VAR: "99"})
    assert run.train.seed == 99
    with pytest.raises(ConfigError):
        load_run_config(env={SEED_ENV_VAR: "abc"})


def test_config_hash_stable_and_sensitive():
    a = resolve_config(preset="swe-like")
    b = resolve_config(preset="swe-like")
    c = resolve_config(preset="swe-like", overrides=["train.seed=1"])
    assert config_hash(a) == config_hash(b)
    assert config_hash(a) != config_hash(c)


def test_manifest_round_trip_is_deterministic(tmp_path):
    tree = resolve_config(preset="fig1")
    p1 = write_manifest(tmp_path / "a", "train", tree)
    p2 = write_manifest(tmp_path / "b", "train", tree)
    assert p1.read_bytes() == p2.read_bytes()
    assert "config_hash" in p1.read_text()


def test_all_presets_build():
    for name in PRESETS:
        run = load_run_config(preset=name)
        assert run.train.learning_rate > 0
