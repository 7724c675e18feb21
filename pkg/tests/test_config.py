import pytest
import yaml

from entitopic.config import (
    Config,
    config_from_dict,
    dump_default_config,
    load_config,
)
from entitopic.errors import ConfigError


class TestDefaults:
    def test_derived_fields(self):
        cfg = Config()
        assert cfg.entity.lstm_hidden == cfg.encoder.d_model // 2
        assert cfg.topic.alpha == pytest.approx(50 / cfg.topic.n_topics)
        assert cfg.bridge.d_shared == cfg.encoder.d_model

    def test_tag_set(self):
        cfg = Config()
        assert cfg.tag_set[0] == "O"
        assert "B-PER" in cfg.tag_set and "I-MISC" in cfg.tag_set
        assert len(cfg.tag_set) == 1 + 2 * len(cfg.entity.entity_types)

    def test_hash_stable(self):
        assert Config().content_hash() == Config().content_hash()
        assert Config().content_hash() != Config(languages=("en",)).content_hash()


class TestLoading:
    def test_dump_then_parse(self):
        text = dump_default_config()
        data = yaml.safe_load(text)
        cfg = config_from_dict(data)
        assert cfg.encoder.d_model == Config().encoder.d_model

    def test_round_trip_via_to_dict(self):
        cfg = Config(languages=("en", "fr"))
        cfg.encoder.d_model = 32
        back = config_from_dict(cfg.to_dict())
        assert back.encoder.d_model == 32
        assert back.languages == ("en", "fr")

    def test_partial_override(self, tmp_path):
        path = tmp_path / "c.yaml"
        path.write_text("encoder:\n  d_model: 48\nlanguages: [en]\n")
        cfg = load_config(str(path))
        assert cfg.encoder.d_model == 48
        assert cfg.encoder.n_layers == Config().encoder.n_layers
        assert cfg.languages == ("en",)

    def test_empty_file_gives_defaults(self, tmp_path):
        path = tmp_path / "empty.yaml"
        path.write_text("")
        cfg = load_config(str(path))
        assert cfg.encoder.d_model == Config().encoder.d_model

    def test_unknown_field_path_in_error(self):
        with pytest.raises(ConfigError, match="encoder.d_modle"):
            config_from_dict({"encoder": {"d_modle": 3}})

    def test_unknown_section(self):
        with pytest.raises(ConfigError, match="enocder"):
            config_from_dict({"enocder": {}})

    def test_bad_languages(self):
        with pytest.raises(ConfigError, match="languages"):
            config_from_dict({"languages": "en"})

    def test_nested_mapping_rejected(self):
        with pytest.raises(ConfigError, match="encoder.d_model"):
            config_from_dict({"encoder": {"d_model": {"nested": 1}}})
