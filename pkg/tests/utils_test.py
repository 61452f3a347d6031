#!/usr/bin/env python

# Core Library modules
import tarfile

# Third party modules
import numpy as np
import pytest

# First party modules
import trajtoolkit.utils as utils
from trajtoolkit.exceptions import ConfigError


def test_checkpoint_round_trip(tmp_path, tiny_model):
    path = str(tmp_path / "model.tar")
    utils.write_checkpoint(path, tiny_model.params, tiny_model.config, {"seed": 3})
    config, params, metadata = utils.read_checkpoint(path)
    assert config == tiny_model.config
    assert metadata == {"seed": 3}
    assert list(params) == list(tiny_model.params)
    for name in params:
        assert params.group(name) == tiny_model.params.group(name)
        assert np.array_equal(params[name].data, tiny_model.params[name].data)


def test_partial_checkpoint(tmp_path, tiny_model):
    """Meta checkpoints hold the shared group only and no model config."""
    meta = tiny_model.params.copy(tiny_model.params.shared_names())
    path = str(tmp_path / "meta.tar")
    utils.write_checkpoint(path, meta)
    config, params, _ = utils.read_checkpoint(path)
    assert config is None
    assert set(params) == set(meta)


def test_checkpoint_layout(tmp_path, tiny_model):
    path = str(tmp_path / "model.tar")
    utils.write_checkpoint(path, tiny_model.params, tiny_model.config)
    with tarfile.open(path) as tar:
        assert sorted(tar.getnames()) == ["model.yml", "parameters.hdf5"]
        assert all(member.mtime == 0 for member in tar.getmembers())


def test_invalid_checkpoints(tmp_path, tiny_model):
    with pytest.raises(ConfigError):
        utils.write_checkpoint(str(tmp_path / "model.zip"), tiny_model.params)
    with pytest.raises(ConfigError):
        utils.read_checkpoint(str(tmp_path / "missing.tar"))
    not_a_tar = tmp_path / "broken.tar"
    not_a_tar.write_text("hello")
    with pytest.raises(ConfigError):
        utils.read_checkpoint(str(not_a_tar))


def test_is_valid_model_file():
    assert utils.is_valid_model_file("model.tar")
    assert not utils.is_valid_model_file("model.json")


def test_derive_seed():
    assert utils.derive_seed(0, "init", "berlin") == utils.derive_seed(
        0, "init", "berlin"
    )
    assert utils.derive_seed(0, "init", "berlin") != utils.derive_seed(
        1, "init", "berlin"
    )
    assert 0 <= utils.derive_seed("anything") < 2 ** 31


def test_config_hash_ignores_key_order():
    assert utils.config_hash({"a": 1, "b": [2, 3]}) == utils.config_hash(
        {"b": [2, 3], "a": 1}
    )
    assert utils.config_hash({"a": 1}) != utils.config_hash({"a": 2})


def test_csv_round_trip(tmp_path):
    path = str(tmp_path / "table.csv")
    utils.write_csv(path, ("name", "value"), [("a", 0.1), ("b", np.float64(1 / 3))])
    rows = utils.read_csv(path)
    assert rows == [{"name": "a", "value": "0.1"}, {"name": "b", "value": repr(1 / 3)}]


def test_load_missing_yaml(tmp_path):
    with pytest.raises(ConfigError):
        utils.load_yaml(str(tmp_path / "nothing.yml"))
