"""Tests for configuration management."""

from pathlib import Path

import pytest
import yaml

from attnmerge.config import (
    Config,
    ConfigurationError,
    ModelConfig,
    get_default_config,
    load_config,
    resolve_config,
)

FIXTURES = Path(__file__).parent / "fixtures"
REPO_ROOT = Path(__file__).parent.parent


def write_yaml(tmp_path, data, name="config.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(data), encoding="utf-8")
    return path


class TestLoadConfig:
    """Tests for loading configuration from files."""

    def test_load_valid_config(self):
        """Every section of the fixture is read."""
        config = load_config(FIXTURES / "test_config.yaml")

        assert config.model.input_h == 32
        assert config.model.encoder_channels == (4, 8, 8, 16)
        assert config.model.heads.deepest == 4
        assert config.model.heads.granular == 2
        assert config.model.mask_granularity == "element"
        assert config.model.renormalize is False
        assert config.model.dtype == "f32"
        assert config.training.lr == 0.001
        assert config.training.betas == (0.8, 0.99)
        assert config.oracle.merge_token_counts == (16, 64)
        assert config.bench.sweep_sizes == (32, 64)
        assert config.run.seed == 7
        assert config.run.reps == 2
        assert config.run.verbose is True
        assert config.run.writers == ("json_file",)

    def test_missing_sections_use_defaults(self, tmp_path):
        """Absent sections and keys take their defaults."""
        path = write_yaml(tmp_path, {"model": {"classes": 4}})
        config = load_config(path)

        assert config.model.classes == 4
        assert config.model.input_h == 64
        assert config.model.decoder_attention == "gmsa_ammm"
        assert config.training.lr == 1e-4
        assert config.training.weight_decay == 0.01
        assert config.run.writers == ("csv_file", "json_file")

    def test_empty_file_gives_defaults(self, tmp_path):
        """An empty YAML file is the default configuration."""
        path = tmp_path / "empty.yaml"
        path.write_text("", encoding="utf-8")

        assert load_config(path) == get_default_config()

    def test_missing_file(self, tmp_path):
        """A missing file raises ConfigurationError."""
        with pytest.raises(ConfigurationError, match="not found"):
            load_config(tmp_path / "absent.yaml")

    def test_invalid_yaml(self, tmp_path):
        """Malformed YAML raises ConfigurationError."""
        path = tmp_path / "broken.yaml"
        path.write_text("model: [unclosed\n", encoding="utf-8")

        with pytest.raises(ConfigurationError, match="Invalid YAML"):
            load_config(path)

    def test_non_mapping_file(self, tmp_path):
        """A YAML list at the top level is rejected."""
        path = tmp_path / "list.yaml"
        path.write_text("- a\n- b\n", encoding="utf-8")

        with pytest.raises(ConfigurationError, match="dictionary"):
            load_config(path)

    def test_unknown_section(self, tmp_path):
        """An unknown top-level section is rejected by name."""
        path = write_yaml(tmp_path, {"augmentation": {}})

        with pytest.raises(ConfigurationError, match="augmentation"):
            load_config(path)

    def test_unknown_key(self, tmp_path):
        """An unknown key inside a section is rejected with its section."""
        path = write_yaml(tmp_path, {"training": {"momentum": 0.9}})

        with pytest.raises(ConfigurationError) as exc_info:
            load_config(path)

        assert "momentum" in str(exc_info.value)
        assert "training" in str(exc_info.value)

    def test_invalid_fixture(self):
        """The invalid fixture fails validation."""
        with pytest.raises(ConfigurationError):
            load_config(FIXTURES / "invalid_config.yaml")

    @pytest.mark.parametrize("name", ["config.yaml", "configs/gradcheck.yaml", "configs/smoketrain.yaml"])
    def test_shipped_configs_load(self, name):
        """The configuration files in the repository are valid."""
        assert isinstance(load_config(REPO_ROOT / name), Config)

    def test_shipped_default_config_matches_defaults(self):
        """config.yaml documents exactly the built-in defaults."""
        assert load_config(REPO_ROOT / "config.yaml") == get_default_config()


class TestValidation:
    """Tests for validation rules."""

    @pytest.mark.parametrize(
        "model, message",
        [
            ({"input_h": 48}, "divisible by 32"),
            ({"classes": 1}, "at least 2"),
            ({"encoder_channels": [4, 8, 16]}, "4 entries"),
            ({"decoder_channels": [8]}, "2 entries"),
            ({"heads": {"deepest": 0}}, "at least 1"),
            ({"encoder_channels": [4, 8, 16, 30], "heads": {"deepest": 4}}, "not divisible"),
            ({"decoder_channels": [9, 8]}, "not divisible"),
            ({"heads": {"deepest": 3, "granular": 2}, "encoder_channels": [4, 8, 16, 30]}, "multiple"),
            ({"dtype": "f16"}, "dtype"),
            ({"mask_granularity": "row"}, "mask_granularity"),
            ({"decoder_attention": "swin"}, "decoder_attention"),
        ],
    )
    def test_model_rules(self, tmp_path, model, message):
        """Each invalid model setting is reported."""
        path = write_yaml(tmp_path, {"model": model})

        with pytest.raises(ConfigurationError, match=message):
            load_config(path)

    @pytest.mark.parametrize(
        "data, message",
        [
            ({"training": {"lr": 0}}, "lr"),
            ({"training": {"weight_decay": -1}}, "weight_decay"),
            ({"training": {"betas": [0.9]}}, "betas"),
            ({"training": {"betas": [0.9, 1.0]}}, "betas"),
            ({"training": {"max_steps": 0}}, "max_steps"),
            ({"training": {"warmup_steps": -1}}, "warmup_steps"),
            ({"gradcheck": {"max_coords_per_param": -1}}, "max_coords_per_param"),
            ({"gradcheck": {"tolerance": 0}}, "gradcheck"),
            ({"oracle": {"max_grid": 5}}, "max_grid"),
            ({"bench": {"sweep_sizes": []}}, "sweep_sizes"),
            ({"bench": {"throughput_reps": 0}}, "throughput_reps"),
            ({"run": {"reps": 0}}, "reps"),
        ],
    )
    def test_other_rules(self, tmp_path, data, message):
        """Training, gradcheck, oracle, bench and run rules are enforced."""
        path = write_yaml(tmp_path, data)

        with pytest.raises(ConfigurationError, match=message):
            load_config(path)

    def test_default_gradcheck_samples_coordinates(self):
        """The default gradient check samples a bounded number of coordinates per parameter."""
        gradcheck = get_default_config().gradcheck

        assert gradcheck.max_coords_per_param == 8
        assert gradcheck.epsilon_scale == 1e-4
        assert gradcheck.abs_floor == 1e-6

    def test_shipped_gradcheck_checks_every_coordinate(self):
        """The full gradient check uses the default step, tolerance and floor on every coordinate."""
        gradcheck = load_config(REPO_ROOT / "configs" / "gradcheck.yaml").gradcheck

        assert gradcheck.epsilon_scale == 1e-4
        assert gradcheck.tolerance == 1e-5
        assert gradcheck.abs_floor == 1e-6
        assert gradcheck.max_coords_per_param == 0

    def test_shipped_smoketrain_warms_up(self):
        """The smoke training config ramps its rate over the first steps."""
        training = load_config(REPO_ROOT / "configs" / "smoketrain.yaml").training

        assert training.warmup_steps > 10
        assert training.max_steps == 500
        assert training.target_loss == 0.1

    def test_defaults_are_valid(self):
        """The default configuration validates."""
        get_default_config().validate()


class TestOverrides:
    """Tests for CLI-style overrides."""

    def test_run_fields_replaced(self):
        """Given values replace run fields; the original is unchanged."""
        config = get_default_config()
        updated = config.with_overrides(seed=5, out_dir="elsewhere", reps=3)

        assert updated.run.seed == 5
        assert updated.run.out_dir == "elsewhere"
        assert updated.run.reps == 3
        assert config.run.seed == 0

    def test_none_values_ignored(self):
        """None means 'flag not given'."""
        config = get_default_config()
        assert config.with_overrides(seed=None, dtype=None) == config

    def test_dtype_goes_to_model(self):
        """The dtype override lands in the model section."""
        updated = get_default_config().with_overrides(dtype="f32")
        assert updated.model.dtype == "f32"

    def test_invalid_override_rejected(self):
        """Overrides are validated."""
        with pytest.raises(ConfigurationError):
            get_default_config().with_overrides(reps=0)


class TestResolveConfig:
    """Tests for config file resolution."""

    def test_explicit_path(self):
        """An explicit path is loaded."""
        assert resolve_config(FIXTURES / "test_config.yaml").run.seed == 7

    def test_local_file_used(self, tmp_path, monkeypatch):
        """Without a path, ./config.yaml is picked up."""
        write_yaml(tmp_path, {"run": {"seed": 42}})
        monkeypatch.chdir(tmp_path)

        assert resolve_config(None).run.seed == 42

    def test_defaults_without_file(self, tmp_path, monkeypatch):
        """Without a path or local file, defaults apply."""
        monkeypatch.chdir(tmp_path)

        assert resolve_config(None) == get_default_config()
        assert isinstance(resolve_config(None).model, ModelConfig)
