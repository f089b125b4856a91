"""Shared fixtures."""

from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from attnmerge.config import HeadsConfig, ModelConfig, get_default_config

FIXTURES_DIR = Path(__file__).parent / "fixtures"


@pytest.fixture
def rng():
    """Seeded generator; every test gets the same stream."""
    return np.random.default_rng(1234)


@pytest.fixture
def fixtures_dir():
    return FIXTURES_DIR


@pytest.fixture
def tiny_model_config():
    """32x32 input with a 1x1 deepest grid and a few dozen channels in total."""
    return ModelConfig(
        input_h=32,
        input_w=32,
        in_channels=3,
        encoder_channels=(2, 4, 4, 4),
        decoder_channels=(4, 4),
        final_channels=4,
        head_hidden=4,
        classes=3,
        heads=HeadsConfig(deepest=2, granular=2),
        head_zero_init=False,
        dtype="f64",
    )


@pytest.fixture
def small_model_config():
    """64x64 input with a 2x2 deepest grid and every decoder path active."""
    return ModelConfig(
        input_h=64,
        input_w=64,
        in_channels=3,
        encoder_channels=(4, 4, 8, 8),
        decoder_channels=(8, 4),
        final_channels=4,
        head_hidden=8,
        classes=3,
        heads=HeadsConfig(deepest=4, granular=2),
        head_zero_init=False,
        dtype="f64",
    )


@pytest.fixture
def tiny_config(tiny_model_config, tmp_path):
    """Full config around the tiny model with small suite sizes, writing to tmp_path."""
    config = get_default_config()
    config = replace(
        config,
        model=tiny_model_config,
        training=replace(config.training, lr=5e-3, max_steps=12, target_loss=10.0),
        gradcheck=replace(config.gradcheck, epsilon_scale=1e-5, abs_floor=1e-4, max_coords_per_param=3),
        oracle=replace(
            config.oracle,
            seeds=2,
            max_grid=4,
            max_heads=2,
            merge_trials=5,
            merge_token_counts=(16, 64),
            dcm_extents=(2, 4),
        ),
        bench=replace(config.bench, sweep_sizes=(32, 64), throughput_reps=1),
        run=replace(config.run, out_dir=str(tmp_path / "reports")),
    )
    config.validate()
    return config
