from __future__ import annotations

import json

import pytest

from fairgate.config import ServiceConfig
from fairgate.errors import ConfigError


def test_defaults_valid():
    config = ServiceConfig.from_dict({})
    assert config.window_size == 1000
    assert config.min_count == 30
    assert config.thresholds.psi_alert == 0.25
    assert config.default_stage_fractions == (0.05, 0.25, 0.5, 1.0)
    assert len(config.flag_rules) == 1
    assert config.flag_rules[0].delta == 0.04


def test_load_from_file(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"window_size": 200, "thresholds": {"psi_watch": 0.08}}))
    config = ServiceConfig.load(path)
    assert config.window_size == 200
    assert config.thresholds.psi_watch == 0.08
    assert config.thresholds.psi_alert == 0.25  # untouched default


def test_bad_threshold_order_rejected():
    with pytest.raises(ConfigError):
        ServiceConfig.from_dict({"thresholds": {"psi_watch": 0.5, "psi_alert": 0.1}})


def test_bad_stage_fractions_rejected():
    with pytest.raises(ConfigError):
        ServiceConfig.from_dict({"default_stage_fractions": [0.5, 0.25, 1.0]})
    with pytest.raises(ConfigError):
        ServiceConfig.from_dict({"default_stage_fractions": [0.5, 0.8]})


def test_env_overrides(monkeypatch, tmp_path):
    monkeypatch.setenv("FAIRGATE_DATA_DIR", str(tmp_path / "env-data"))
    monkeypatch.setenv("FAIRGATE_LISTEN", "0.0.0.0:9100")
    config = ServiceConfig.from_dict({"data_dir": "ignored", "port": 1234})
    assert str(config.data_dir).endswith("env-data")
    assert (config.host, config.port) == ("0.0.0.0", 9100)


def test_bad_listen_env_rejected(monkeypatch):
    monkeypatch.setenv("FAIRGATE_LISTEN", "nonsense")
    with pytest.raises(ConfigError):
        ServiceConfig.from_dict({})


def test_missing_config_file_errors():
    with pytest.raises(ConfigError):
        ServiceConfig.load("/nonexistent/config.json")
