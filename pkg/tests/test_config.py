import pytest

from refinery.config import Config, ConfigError, load_config, parse_config


def write(tmp_path, text):
    p = tmp_path / "c.toml"
    p.write_text(text)
    return p


def test_minimal_config_defaults(tmp_path):
    cfg = load_config(write(tmp_path, '[backend]\nmodel = "m"\n'))
    assert cfg.pipeline.max_rounds == 6 and cfg.pipeline.max_length == 20
    assert cfg.pipeline.preference_threshold == 3.0
    assert cfg.pipeline.max_attempts == 3
    assert cfg.backend.model == "m"


def test_negative_rounds(tmp_path):
    with pytest.raises(ConfigError, match="max_rounds"):
        load_config(write(tmp_path, "[pipeline]\nmax_rounds = -1\n"))


def test_unknown_key_named(tmp_path):
    with pytest.raises(ConfigError, match="foo"):
        load_config(write(tmp_path, "[pipeline]\nfoo = 1\n"))
    with pytest.raises(ConfigError, match="foo"):
        load_config(write(tmp_path, "foo = 1\n"))


def test_type_checks():
    with pytest.raises(ConfigError, match="integer"):
        parse_config({"pipeline": {"max_rounds": 2.5}})
    with pytest.raises(ConfigError, match="boolean"):
        parse_config({"backend": {"cache": 1}})
    assert parse_config({"pipeline": {"preference_threshold": 3}}).pipeline.preference_threshold == 3.0


def test_malformed_and_missing(tmp_path):
    with pytest.raises(ConfigError, match="malformed"):
        load_config(write(tmp_path, "[pipeline\n"))
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "absent.toml")


def test_overrides():
    cfg = Config().with_overrides(max_rounds=3, max_length=None)
    assert cfg.pipeline.max_rounds == 3 and cfg.pipeline.max_length == 20
    with pytest.raises(ConfigError):
        Config().with_overrides(max_rounds=0)
