import pytest
from hypothesis import given
from hypothesis import strategies as st

from aisprop.cli import AblationConfig
from aisprop.configio import from_mapping, to_mapping
from aisprop.ensemble import EnsembleConfig
from aisprop.errors import ConfigError
from aisprop.nn import ModelConfig


def problems_of(cls, data):
    with pytest.raises(ConfigError) as info:
        from_mapping(cls, data)
    return info.value.problems


class TestFromMapping:
    def test_defaults(self):
        assert from_mapping(ModelConfig, {}) == ModelConfig()

    def test_enums_are_case_insensitive(self):
        cfg = from_mapping(ModelConfig, {"encoder": "BiRecurrent", "pooling": "First"})
        assert cfg.encoder.value == "birecurrent" and cfg.pooling.value == "first"

    def test_integer_accepted_for_float(self):
        assert from_mapping(ModelConfig, {"learning_rate": 1}).learning_rate == 1.0

    @pytest.mark.parametrize("data,key", [
        ({"epochs": 1.5}, "epochs"), ({"epochs": True}, "epochs"), ({"recurrent_head": 1}, "recurrent_head"),
        ({"encoder": "gru"}, "encoder"), ({"learning_rate": "x"}, "learning_rate"), ({"typo": 1}, "typo"),
    ])
    def test_single_problem(self, data, key):
        (p,) = problems_of(ModelConfig, data)
        assert p.startswith(key)

    def test_type_and_value_problems_together(self):
        probs = problems_of(ModelConfig, {"epochs": "ten", "dropout": 1.5, "batch_size": 0})
        assert sorted(p.split(":")[0] for p in probs) == ["batch_size", "dropout", "epochs"]

    def test_nested_paths(self):
        probs = problems_of(EnsembleConfig, {"base_configs": [{}, {"hidden_size": 0, "depth": 2}]})
        assert "base_configs[1].depth: unknown key" in probs
        assert any(p.startswith("base_configs[1].hidden_size") for p in probs)

    def test_optional_nested(self):
        assert from_mapping(AblationConfig, {"data": "x.csv"}).baseline is None
        cfg = from_mapping(AblationConfig, {"data": "x.csv", "baseline": {"encoder": "birecurrent"}})
        assert isinstance(cfg.baseline, ModelConfig)
        assert problems_of(AblationConfig, {"data": "x.csv", "baseline": 3}) == ["baseline: expected an object"]

    def test_top_level_must_be_object(self):
        assert problems_of(ModelConfig, [1, 2])


class TestRoundTrip:
    @given(st.builds(
        ModelConfig,
        learning_rate=st.floats(1e-5, 1.0), epochs=st.integers(0, 50),
        encoder=st.sampled_from(["birecurrent", "selfattention", "bagoftokens"]),
        positional=st.sampled_from(["sinusoidal", "learned"]), pooling=st.sampled_from(["mean", "first"]),
        hidden_size=st.sampled_from([8, 16, 64]), head_hidden=st.integers(0, 8),
    ))
    def test_model_config(self, cfg):
        assert from_mapping(ModelConfig, to_mapping(cfg)) == cfg

    def test_ensemble_config(self):
        cfg = EnsembleConfig(bagging_size=3, meta_learner="regressionstump", seed=4)
        assert from_mapping(EnsembleConfig, to_mapping(cfg)) == cfg
