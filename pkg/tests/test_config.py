"""
Tests for configuration objects and config files.
"""

import pytest

from pinvtools.config import GenSpec, PipelineConfig, SolveConfig, load_config
from pinvtools.utils.validation import ConfigError


class TestLoadConfig:
    def test_solve_config_file(self, write_json):
        path = write_json("solve.json", {"restarts": 4, "seed": 9})
        config = load_config(path)
        assert config == SolveConfig(restarts=4, seed=9)

    def test_pipeline_config_file(self, write_json):
        path = write_json("pipeline.json", {"reduce": False, "solve": {"max_evals": 10}})
        config = load_config(path, PipelineConfig)
        assert config.reduce is False
        assert config.totalize is True
        assert config.solve.max_evals == 10

    def test_invalid_json(self, write_json):
        with pytest.raises(ConfigError):
            load_config(write_json("bad.json", "{restarts: 4"))

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(str(tmp_path / "nope.json"))

    def test_not_an_object(self, write_json):
        with pytest.raises(ConfigError, match="expected an object"):
            load_config(write_json("list.json", [1, 2]))


class TestRoundTrip:
    def test_pipeline(self):
        config = PipelineConfig(reduce=False, solve=SolveConfig(seed=3))
        assert PipelineConfig.from_dict(config.to_dict()) == config

    def test_gen_spec(self):
        spec = GenSpec(seed=5, op_range=(2, 4), weights={"add": 2.0})
        again = GenSpec.from_dict(spec.to_dict())
        assert again == spec
        assert again.op_range == (2, 4)


class TestGenSpec:
    def test_weights_override_defaults(self):
        weights = GenSpec(weights={"add": 0.0, "sub": 5.0}).kind_weights()
        assert "add" not in weights
        assert weights["sub"] == 5.0

    def test_boolean_weights_need_the_flag(self):
        assert "and" not in GenSpec(weights={"and": 2.0}).kind_weights()

    def test_all_zero(self):
        spec = GenSpec(weights={k: 0.0 for k in GenSpec().kind_weights()})
        with pytest.raises(ConfigError):
            spec.kind_weights()

    @pytest.mark.parametrize("field,value", [
        ("reuse_prob", 1.5), ("num_inputs", 0), ("max_rejections", 0), ("seed", -2),
    ])
    def test_invalid(self, field, value):
        with pytest.raises(ConfigError):
            GenSpec(**{field: value})
