"""Configuration management for attnmerge."""

from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Type, TypeVar

import yaml

DTYPE_NAMES = ("f32", "f64")
MASK_GRANULARITIES = ("block", "element")
DECODER_ATTENTION_VARIANTS = ("gmsa_ammm", "msa", "none")

T = TypeVar("T")


class ConfigurationError(Exception):
    """Raised when configuration is invalid or cannot be loaded."""

    pass


@dataclass
class HeadsConfig:
    """Attention head counts per decoder level kind."""

    deepest: int = 4
    granular: int = 2


@dataclass
class ModelConfig:
    """Network shape and attention options."""

    input_h: int = 64
    input_w: int = 64
    in_channels: int = 3
    encoder: str = "toy_conv"
    encoder_channels: Tuple[int, ...] = (16, 32, 64, 128)
    decoder_channels: Tuple[int, ...] = (64, 32)
    final_channels: int = 32
    head_hidden: int = 32
    classes: int = 6
    heads: HeadsConfig = field(default_factory=HeadsConfig)
    decoder_attention: str = "gmsa_ammm"
    mask_granularity: str = "block"
    renormalize: bool = True
    head_zero_init: bool = True
    dtype: str = "f64"


@dataclass
class TrainingConfig:
    """Optimizer and schedule options for the smoke trainer."""

    optimizer: str = "adamw"
    lr: float = 1e-4
    weight_decay: float = 0.01
    betas: Tuple[float, ...] = (0.9, 0.999)
    eps: float = 1e-8
    poly_power: float = 0.9
    # linear ramp of the rate over the first steps; 0 disables it
    warmup_steps: int = 0
    max_steps: int = 500
    batch_size: int = 1
    target_loss: float = 0.1


@dataclass
class GradcheckConfig:
    """Finite-difference comparison options."""

    epsilon_scale: float = 1e-4
    tolerance: float = 1e-5
    abs_floor: float = 1e-6
    # 0 checks every coordinate of every parameter
    max_coords_per_param: int = 8


@dataclass
class OracleConfig:
    """Sizes and tolerances of the attention / merge / DCM oracle suites."""

    seeds: int = 20
    max_grid: int = 8
    max_heads: int = 4
    head_dim: int = 4
    merge_trials: int = 100
    merge_token_counts: Tuple[int, ...] = (16, 64, 256)
    dcm_extents: Tuple[int, ...] = (2, 4, 8)
    tolerance: float = 1e-12
    row_sum_tolerance: float = 1e-6


@dataclass
class BenchConfig:
    """Complexity sweep and throughput measurement options."""

    sweep_sizes: Tuple[int, ...] = (32, 64, 128, 256)
    channels: int = 64
    window: int = 8
    deepest: int = 16
    throughput_reps: int = 3


@dataclass
class RunConfig:
    """Options shared by every CLI command."""

    seed: int = 0
    out_dir: str = "reports"
    reps: int = 1
    verbose: bool = False
    # file writers, by registry name; stdout always runs last
    writers: Tuple[str, ...] = ("csv_file", "json_file")


@dataclass
class Config:
    """Main configuration class."""

    model: ModelConfig = field(default_factory=ModelConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    gradcheck: GradcheckConfig = field(default_factory=GradcheckConfig)
    oracle: OracleConfig = field(default_factory=OracleConfig)
    bench: BenchConfig = field(default_factory=BenchConfig)
    run: RunConfig = field(default_factory=RunConfig)

    def validate(self) -> None:
        """
        Validate configuration values.

        Raises:
            ConfigurationError: If configuration is invalid
        """
        model = self.model

        if model.input_h % 32 != 0 or model.input_w % 32 != 0:
            raise ConfigurationError(
                f"model input extents must be divisible by 32, "
                f"got {model.input_h}x{model.input_w}"
            )

        if model.input_h <= 0 or model.input_w <= 0:
            raise ConfigurationError("model input extents must be positive")

        if model.classes < 2:
            raise ConfigurationError(
                f"model.classes must be at least 2, got {model.classes}"
            )

        if len(model.encoder_channels) != 4:
            raise ConfigurationError(
                f"model.encoder_channels needs 4 entries, "
                f"got {len(model.encoder_channels)}"
            )

        if len(model.decoder_channels) != 2:
            raise ConfigurationError(
                f"model.decoder_channels needs 2 entries, "
                f"got {len(model.decoder_channels)}"
            )

        widths = (
            list(model.encoder_channels)
            + list(model.decoder_channels)
            + [model.final_channels, model.head_hidden, model.in_channels]
        )
        if any(w <= 0 for w in widths):
            raise ConfigurationError("model channel widths must be positive")

        if model.heads.deepest < 1 or model.heads.granular < 1:
            raise ConfigurationError("model.heads entries must be at least 1")

        if model.encoder_channels[3] % model.heads.deepest != 0:
            raise ConfigurationError(
                f"model.encoder_channels[3]={model.encoder_channels[3]} is not "
                f"divisible by heads.deepest={model.heads.deepest}"
            )

        for width in model.decoder_channels:
            if width % model.heads.granular != 0:
                raise ConfigurationError(
                    f"decoder width {width} is not divisible by "
                    f"heads.granular={model.heads.granular}"
                )

        if (
            model.decoder_attention == "gmsa_ammm"
            and model.heads.deepest % model.heads.granular != 0
        ):
            raise ConfigurationError(
                "heads.deepest must be a multiple of heads.granular so deeper "
                "attention maps can be merged into granular ones"
            )

        if model.dtype not in DTYPE_NAMES:
            raise ConfigurationError(
                f"model.dtype must be one of {', '.join(DTYPE_NAMES)}, "
                f"got {model.dtype!r}"
            )

        if model.mask_granularity not in MASK_GRANULARITIES:
            raise ConfigurationError(
                f"model.mask_granularity must be one of "
                f"{', '.join(MASK_GRANULARITIES)}, got {model.mask_granularity!r}"
            )

        if model.decoder_attention not in DECODER_ATTENTION_VARIANTS:
            raise ConfigurationError(
                f"model.decoder_attention must be one of "
                f"{', '.join(DECODER_ATTENTION_VARIANTS)}, "
                f"got {model.decoder_attention!r}"
            )

        training = self.training
        if training.lr <= 0:
            raise ConfigurationError(f"training.lr must be positive, got {training.lr}")

        if training.weight_decay < 0:
            raise ConfigurationError(
                f"training.weight_decay must be non-negative, "
                f"got {training.weight_decay}"
            )

        if len(training.betas) != 2 or not all(0 <= b < 1 for b in training.betas):
            raise ConfigurationError(
                f"training.betas must be two values in [0, 1), got {training.betas}"
            )

        if training.max_steps < 1 or training.batch_size < 1:
            raise ConfigurationError(
                "training.max_steps and training.batch_size must be at least 1"
            )

        if training.warmup_steps < 0:
            raise ConfigurationError(
                f"training.warmup_steps must be non-negative, got {training.warmup_steps}"
            )

        if self.gradcheck.max_coords_per_param < 0:
            raise ConfigurationError(
                f"gradcheck.max_coords_per_param must be non-negative, "
                f"got {self.gradcheck.max_coords_per_param}"
            )

        if self.gradcheck.tolerance <= 0 or self.gradcheck.epsilon_scale <= 0:
            raise ConfigurationError(
                "gradcheck.tolerance and gradcheck.epsilon_scale must be positive"
            )

        if self.oracle.max_grid < 2 or self.oracle.max_grid % 2 != 0:
            raise ConfigurationError(
                f"oracle.max_grid must be an even extent >= 2, "
                f"got {self.oracle.max_grid}"
            )

        if not self.bench.sweep_sizes:
            raise ConfigurationError("bench.sweep_sizes must list at least one grid extent")

        if self.bench.throughput_reps < 1:
            raise ConfigurationError(
                f"bench.throughput_reps must be at least 1, got {self.bench.throughput_reps}"
            )

        if self.run.reps < 1:
            raise ConfigurationError(f"run.reps must be at least 1, got {self.run.reps}")

    def with_overrides(self, **run_overrides: Any) -> "Config":
        """
        Return a copy with ``run`` fields (and ``dtype``) replaced.

        ``None`` values are ignored so CLI flags that were not given keep the
        file's value.
        """
        overrides = {k: v for k, v in run_overrides.items() if v is not None}
        dtype = overrides.pop("dtype", None)

        model = replace(self.model, dtype=dtype) if dtype else self.model
        updated = replace(self, model=model, run=replace(self.run, **overrides))
        updated.validate()
        return updated


def _build_section(cls: Type[T], data: Any, section: str) -> T:
    """Build one dataclass section from a mapping, rejecting unknown keys."""
    if data is None:
        return cls()

    if not isinstance(data, dict):
        raise ConfigurationError(f"Section '{section}' must be a mapping")

    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigurationError(
            f"Unknown key(s) in section '{section}': {', '.join(unknown)}"
        )

    values: Dict[str, Any] = {}
    for name, value in data.items():
        if name == "heads" and cls is ModelConfig:
            values[name] = _build_section(HeadsConfig, value, f"{section}.heads")
        elif isinstance(value, list):
            values[name] = tuple(value)
        else:
            values[name] = value

    return cls(**values)


def load_config(config_path: str | Path = "config.yaml") -> Config:
    """
    Load configuration from YAML file.

    Args:
        config_path: Path to configuration file

    Returns:
        Validated Config instance

    Raises:
        ConfigurationError: If config cannot be loaded or is invalid
    """
    path = Path(config_path)

    if not path.exists():
        raise ConfigurationError(f"Configuration file not found: {path}")

    try:
        with open(path, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f)
    except yaml.YAMLError as e:
        raise ConfigurationError(f"Invalid YAML in configuration file: {e}") from e
    except Exception as e:
        raise ConfigurationError(f"Failed to read configuration file: {e}") from e

    if data is None:
        data = {}

    if not isinstance(data, dict):
        raise ConfigurationError("Configuration file must contain a YAML dictionary")

    unknown = sorted(set(data) - {f.name for f in fields(Config)})
    if unknown:
        raise ConfigurationError(f"Unknown configuration section(s): {', '.join(unknown)}")

    try:
        config = Config(
            model=_build_section(ModelConfig, data.get("model"), "model"),
            training=_build_section(TrainingConfig, data.get("training"), "training"),
            gradcheck=_build_section(GradcheckConfig, data.get("gradcheck"), "gradcheck"),
            oracle=_build_section(OracleConfig, data.get("oracle"), "oracle"),
            bench=_build_section(BenchConfig, data.get("bench"), "bench"),
            run=_build_section(RunConfig, data.get("run"), "run"),
        )
    except TypeError as e:
        raise ConfigurationError(f"Invalid configuration value type: {e}") from e

    config.validate()
    return config


def resolve_config(config_path: Optional[str | Path]) -> Config:
    """
    Load ``config_path`` if given, else ``./config.yaml`` if present, else defaults.
    """
    if config_path is not None:
        return load_config(config_path)

    local = Path("config.yaml")
    if local.exists():
        return load_config(local)

    return get_default_config()


def get_default_config() -> Config:
    """
    Get default configuration.

    Returns:
        Config instance with default values
    """
    config = Config()
    config.validate()
    return config
