# Core Library modules
import logging

# Third party modules
import numpy as np
import pytest

# First party modules
import trajtoolkit.data as data
from trajtoolkit.model import HalfOpenTransformer, ModelConfig


def pytest_configure(config):
    """Flake8 is very verbose by default. Silence it."""
    logging.getLogger("flake8").setLevel(logging.WARNING)


@pytest.fixture
def tiny_config():
    """A model small enough for finite-difference gradient checks."""
    return ModelConfig(
        num_locations=5,
        hidden_dim=8,
        num_heads=2,
        num_layers=1,
        max_seq_len=6,
        dropout_rate=0.0,
        mlp_ratio=2,
    )


@pytest.fixture
def tiny_model(tiny_config):
    return HalfOpenTransformer.create(tiny_config, np.random.default_rng(0))


@pytest.fixture
def small_city():
    return data.synth_city(
        seed=3, num_locations=30, num_users=40, name="small", extent_km=10.0
    )


@pytest.fixture
def cycle_city():
    """Every user-day walks 0, 1, 2, 3, 4, 5 in order: easy to memorise."""
    vocabulary = data.LocationVocabulary(
        latitudes=np.linspace(39.90, 39.95, 6), longitudes=np.full(6, 116.40)
    )
    trajectories = [
        data.Trajectory(f"u{i}", i * 24 + np.arange(6), np.arange(6))
        for i in range(10)
    ]
    return data.CityDataset(
        name="cycle",
        vocabulary=vocabulary,
        train=trajectories[:7],
        valid=trajectories[7:8],
        test=trajectories[8:],
        profile=data.frequency_profile(trajectories[:7], 6),
    )
