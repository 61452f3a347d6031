#!/usr/bin/env python

# Third party modules
import numpy as np
import pytest

# First party modules
import trajtoolkit.activation_functions as activation_functions
import trajtoolkit.create as create
from trajtoolkit.exceptions import ConfigError
from trajtoolkit.model import ModelConfig
from trajtoolkit.tensor import Tape, Tensor


def test_simple_creation():
    """Create the parameters of a two layer model."""
    config = ModelConfig(num_locations=7, hidden_dim=8, num_heads=2, num_layers=2)
    params = create.create_parameters(config, np.random.default_rng(0))
    assert params["embedding"].shape == (8, 8)
    assert params["positional"].shape == (25, 8)
    assert params["layers.1.mlp.0.weight"].shape == (8, 32)
    assert len(params.shared_names()) == 2 * 4


def test_creation_is_seeded():
    config = ModelConfig(num_locations=4, hidden_dim=4, num_heads=1, num_layers=1)
    a = create.create_parameters(config, np.random.default_rng(5))
    b = create.create_parameters(config, np.random.default_rng(5))
    assert all(np.array_equal(a[name].data, b[name].data) for name in a)


def test_deep_projection_is_random():
    config = ModelConfig(
        num_locations=4, hidden_dim=4, num_heads=1, num_layers=1, proj_layers=2
    )
    params = create.create_parameters(config, np.random.default_rng(0))
    assert not np.array_equal(params["layers.0.proj_shared.1.weight"].data, np.eye(4))


def test_get_activation_function():
    relu = activation_functions.get_activation_function("ReLU")
    x = Tensor(np.array([-1.0, 2.0]))
    assert relu(Tape(), x).data.tolist() == [0.0, 2.0]
    identity = activation_functions.get_activation_function("Identity")
    assert identity(Tape(), x) is x
    for name in ("Sigmoid", "Tape"):
        with pytest.raises(ConfigError):
            activation_functions.get_activation_function(name)
