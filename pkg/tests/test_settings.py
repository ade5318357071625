import json

import pytest

from homux.config import STAGES_BY_NAME, PipelineConfig, layer_dirname
from homux.errors import ConfigError
from homux.settings import DEFAULT_SETTINGS, config_hash, deep_merge, load_settings, save_settings


@pytest.fixture
def data_file(tmp_path):
    path = tmp_path / "an.csv"
    path.write_text("q1,q2,q3\n0,1,2\n1,2,3\n2,3,4\n3,4,0\n4,0,1\n")
    return path


def settings_for(data_file, **overrides):
    settings = deep_merge(DEFAULT_SETTINGS, {"seed": 7, "layers": {"AN": {"data": str(data_file)}}})
    return deep_merge(settings, overrides)


class TestSettings:
    def test_defaults_without_file(self):
        assert load_settings(None) == DEFAULT_SETTINGS
        assert load_settings(None) is not DEFAULT_SETTINGS

    def test_nested_merge_keeps_defaults(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text(json.dumps({"seed": 1, "validation": {"n_perm": 500}}))
        settings = load_settings(str(path))
        assert settings["validation"]["n_perm"] == 500
        assert settings["validation"]["n_boot"] == DEFAULT_SETTINGS["validation"]["n_boot"]

    def test_unknown_key_and_bad_json(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text(json.dumps({"seeed": 1}))
        with pytest.raises(ConfigError, match="seeed"):
            load_settings(str(path))
        path.write_text("{")
        with pytest.raises(ConfigError):
            load_settings(str(path))
        with pytest.raises(ConfigError):
            load_settings(str(tmp_path / "absent.json"))

    def test_save_and_reload(self, tmp_path):
        path = str(tmp_path / "out" / "config.json")
        save_settings(deep_merge(DEFAULT_SETTINGS, {"seed": 3}), path)
        assert load_settings(path)["seed"] == 3

    def test_hash_ignores_runtime_keys(self):
        base = deep_merge(DEFAULT_SETTINGS, {"seed": 1})
        assert config_hash(base) == config_hash(deep_merge(base, {"jobs": 8, "output_dir": "elsewhere"}))
        assert config_hash(base) != config_hash(deep_merge(base, {"seed": 2}))
        assert config_hash(base) != config_hash(base, {"layer:AN:0": "ff"})


class TestPipelineConfig:
    def test_valid(self, data_file):
        cfg = PipelineConfig.from_settings(settings_for(data_file))
        assert cfg.seed == 7
        assert cfg.validation.seed == 7
        assert cfg.layer("AN").data == (str(data_file),)
        assert set(cfg.input_digests()) == {"layer:AN:0"}

    def test_seed_is_mandatory(self, data_file):
        settings = settings_for(data_file)
        settings["seed"] = None
        with pytest.raises(ConfigError, match="seed"):
            PipelineConfig.from_settings(settings)
        settings["seed"] = True
        with pytest.raises(ConfigError):
            PipelineConfig.from_settings(settings)

    def test_missing_input(self, tmp_path):
        settings = deep_merge(DEFAULT_SETTINGS, {"seed": 1, "layers": {"AN": "absent.csv"}})
        with pytest.raises(ConfigError, match="Missing input"):
            PipelineConfig.from_settings(settings, base_dir=str(tmp_path))

    def test_invalid_sections(self, data_file):
        with pytest.raises(ConfigError):
            PipelineConfig.from_settings(settings_for(data_file, validation={"n_perm": 10}))
        with pytest.raises(ConfigError):
            PipelineConfig.from_settings(settings_for(data_file, candidates={"k_min": 2}))
        with pytest.raises(ConfigError):
            PipelineConfig.from_settings(settings_for(data_file, network={"methods": ["spearman"]}))
        with pytest.raises(ConfigError, match="Unknown keys"):
            PipelineConfig.from_settings(settings_for(data_file, metrics={"top": 3}))

    def test_candidates_need_a_source(self, data_file):
        with pytest.raises(ConfigError, match="Candidates disabled"):
            PipelineConfig.from_settings(settings_for(data_file, candidates={"network_based": False}))

    def test_unknown_layer(self, data_file):
        with pytest.raises(ConfigError, match="Unknown layer"):
            PipelineConfig.from_settings(settings_for(data_file)).layer("BN")


def test_layer_dirname():
    assert layer_dirname("BED/OSFED") == "BED_OSFED"
    assert layer_dirname("AN") == "AN"


def test_stage_artifacts_expand_templates():
    assert STAGES_BY_NAME["network"].artifacts(["nonparanormal", "polychoric"]) == [
        "network_nonparanormal.tsv", "network_polychoric.tsv",
        "network_nonparanormal.json", "network_polychoric.json",
    ]
    assert STAGES_BY_NAME["multiplex"].artifacts(["polychoric"]) == ["multiplex_synergy.json", "multiplex_redundancy.json"]
    assert "metrics/top_items_redundancy.tsv" in STAGES_BY_NAME["metrics"].artifacts([])
    assert STAGES_BY_NAME["validate"].artifacts(["nonparanormal"])[-1] == "hyperedges.json"
