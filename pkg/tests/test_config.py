import json

import pytest

from btlkit.config import ToolConfig, apply_overrides, load_config
from btlkit.errors import ConfigError

from conftest import FIXTURES


def test_defaults():
    cfg = load_config()
    assert (cfg.tau, cfg.lambda_max, cfg.beta, cfg.coordinate_tolerance) == (0.5, 5, 0.04, 0.14)
    assert cfg.allocation == "linear" and cfg.fallback_ranker and cfg.endpoint is None


def test_three_layers():
    # default -> file (tau .6, lambda 4, beta .1, workers 2) -> flags (tau .7)
    cfg = load_config(FIXTURES / "config.json", {"tau": 0.7, "lambda_max": None, "beta": None})
    assert cfg.tau == 0.7
    assert cfg.lambda_max == 4
    assert cfg.beta == 0.1
    assert cfg.workers == 2
    assert cfg.coordinate_tolerance == 0.14


def test_endpoint_merging(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"endpoint": {"base_url": "http://a", "max_retries": 0, "auth_token_env_var": "TOK"}}))
    cfg = load_config(path, {"endpoint": {"base_url": "http://b"}})
    assert cfg.endpoint.base_url == "http://b"
    assert cfg.endpoint.max_retries == 0 and cfg.endpoint.auth_token_env_var == "TOK"
    ann = cfg.annotator()
    assert ann.endpoint is cfg.endpoint and ann.lambda_ == 5


@pytest.mark.parametrize(
    "data",
    [
        {"tau": 0},
        {"tau": 1.5},
        {"lambda": 0},
        {"lambda": 2.5},
        {"coordinate_tolerance": 1},
        {"allocation": "cubic"},
        {"beta": -0.1},
        {"workers": 0},
        {"colour": "red"},
        {"endpoint": {"max_retries": 1}},
        {"endpoint": {"base_url": "http://x", "timeout": 0}},
        {"endpoint": {"base_url": "http://x", "port": 1}},
        [1, 2],
    ],
)
def test_invalid_file(tmp_path, data):
    path = tmp_path / "c.json"
    path.write_text(json.dumps(data))
    with pytest.raises(ConfigError):
        load_config(path)


def test_unreadable(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(bad)


def test_none_overrides_are_ignored():
    assert apply_overrides(ToolConfig(), {"tau": None}) == ToolConfig()
