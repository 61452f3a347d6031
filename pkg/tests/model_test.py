#!/usr/bin/env python

# Core Library modules
import dataclasses

# Third party modules
import numpy as np
import pytest

# First party modules
import trajtoolkit.create as create
import trajtoolkit.data as data
from trajtoolkit.exceptions import ConfigError, RegistryError
from trajtoolkit.model import PRIVATE, SHARED, HalfOpenTransformer, ModelConfig
from trajtoolkit.tensor import Tape, Tensor, numerical_gradient


def test_shared_group_is_query_key_path(tiny_model):
    shared = set(tiny_model.params.shared_names())
    assert shared == {
        "layers.0.proj_shared.0.weight",
        "layers.0.proj_shared.0.bias",
        "layers.0.attention.w_q",
        "layers.0.attention.w_k",
    }
    assert "embedding" in tiny_model.params.private_names()
    assert "layers.0.attention.w_v" in tiny_model.params.private_names()
    tiny_model.params.check_partition()


def test_full_sharing_keeps_embedding_private(tiny_config):
    config = dataclasses.replace(tiny_config, half_open=False)
    model = HalfOpenTransformer.create(config, np.random.default_rng(0))
    assert model.params.private_names() == ["embedding"]


def test_parameters_do_not_depend_on_vocabulary_except_embedding(tiny_config):
    small = HalfOpenTransformer.create(tiny_config, np.random.default_rng(0))
    large = HalfOpenTransformer.create(
        dataclasses.replace(tiny_config, num_locations=9), np.random.default_rng(0)
    )
    for name in small.params.shared_names():
        assert small.params[name].shape == large.params[name].shape
    assert large.params["embedding"].shape == (10, 8)


def test_single_projection_starts_as_identity(tiny_model):
    weight = tiny_model.params["layers.0.proj_shared.0.weight"].data
    assert np.array_equal(weight, np.eye(8))


def test_parameter_group():
    assert create.parameter_group("layers.3.proj_shared.1.bias") == SHARED
    assert create.parameter_group("layers.3.proj_private.1.bias") == PRIVATE
    assert create.parameter_group("positional", half_open=False) == SHARED


def test_invalid_model_config():
    with pytest.raises(ConfigError):
        ModelConfig(num_locations=5, hidden_dim=10, num_heads=4)
    with pytest.raises(ConfigError):
        ModelConfig(num_locations=5, proj_layers=4)
    with pytest.raises(ConfigError):
        ModelConfig(num_locations=5, activation="Swish")


def test_forward_shape(tiny_model):
    ids = np.array([[5, 0, 1, 2], [5, 3, 3, 4]])
    logits = tiny_model.forward(Tape(), ids)
    assert logits.shape == (2, 4, 5)


def test_forward_is_causal(tiny_model):
    """Changing a later visit leaves the logits of earlier positions alone."""
    first = tiny_model.forward(Tape(enabled=False), np.array([[5, 0, 1, 2]])).data
    second = tiny_model.forward(Tape(enabled=False), np.array([[5, 0, 1, 4]])).data
    np.testing.assert_allclose(first[:, :3], second[:, :3], rtol=0, atol=1e-12)
    assert not np.allclose(first[:, 3], second[:, 3])


def test_padding_does_not_change_valid_positions(tiny_model):
    alone = tiny_model.forward(Tape(enabled=False), np.array([[5, 0, 1]])).data
    ids = np.array([[5, 0, 1, 0, 0], [5, 2, 3, 4, 1]])
    mask = np.array([[True, True, True, False, False], [True] * 5])
    batched = tiny_model.forward(Tape(enabled=False), ids, mask).data
    np.testing.assert_allclose(batched[0, :3], alone[0], rtol=0, atol=1e-12)


def test_embed_errors(tiny_model):
    with pytest.raises(ConfigError):
        tiny_model.embed(Tape(), np.zeros((1, 8), dtype=int))
    with pytest.raises(IndexError):
        tiny_model.embed(Tape(), np.array([[6]]))


def test_attention_weights_are_causal_distributions(tiny_model):
    h = Tensor(np.random.default_rng(0).normal(size=(4, 8)))
    z, weights = tiny_model.causal_attention(Tape(), h, h, 0)
    assert z.shape == (4, 8)
    assert weights.shape == (1, 2, 4, 4)
    np.testing.assert_allclose(weights.sum(axis=-1), 1.0)
    rows, cols = np.triu_indices(4, 1)
    assert np.all(weights[..., rows, cols] == 0)


def test_zero_query_key_gives_uniform_attention(tiny_model):
    tiny_model.params["layers.0.attention.w_q"].data[...] = 0.0
    tiny_model.params["layers.0.attention.w_k"].data[...] = 0.0
    h = Tensor(np.random.default_rng(1).normal(size=(1, 3, 8)))
    _, weights = tiny_model.causal_attention(Tape(), h, h, 0)
    expected = np.tril(np.ones((3, 3))) / np.arange(1, 4)[:, None]
    np.testing.assert_allclose(weights[0, 0], expected)
    np.testing.assert_allclose(weights[0, 1], expected)


def test_internal_loss_gradient(tiny_model):
    batch = data.Batch(
        ids=np.array([[5, 0, 1, 2], [5, 3, 4, 0]]),
        mask=np.array([[True] * 4, [True, True, True, False]]),
    )
    tape = Tape()
    tape.backward(tiny_model.internal_loss(tape, batch))
    for name in ("layers.0.attention.w_q", "layers.0.norm2.gain", "embedding"):
        tensor = tiny_model.params[name]
        expected = numerical_gradient(
            lambda: tiny_model.internal_loss(Tape(enabled=False), batch).item(), tensor
        )
        np.testing.assert_allclose(tensor.grad, expected, rtol=1e-4, atol=1e-7)


def test_internal_loss_errors(tiny_model):
    empty = data.Batch(ids=np.zeros((0, 0), dtype=int), mask=np.zeros((0, 0), bool))
    with pytest.raises(ValueError):
        tiny_model.internal_loss(Tape(), empty)
    only_bos = data.Batch(ids=np.array([[5]]), mask=np.array([[True]]))
    with pytest.raises(ValueError):
        tiny_model.internal_loss(Tape(), only_bos)


def test_one_visit_predicts_from_bos(tiny_model):
    trajectory = data.Trajectory("a", [8], [3])
    (with_bos,) = data.batch([trajectory], 1, max_len=6, bos_id=5)
    loss = tiny_model.internal_loss(Tape(enabled=False), with_bos).item()
    logits = tiny_model.forward(Tape(enabled=False), with_bos.ids).data[0, 0]
    expected = np.log(np.exp(logits).sum()) - logits[3]
    assert loss == pytest.approx(expected)
    (without_bos,) = data.batch([trajectory], 1, max_len=6)
    with pytest.raises(ValueError):
        tiny_model.internal_loss(Tape(enabled=False), without_bos)


def test_next_distribution_logits(tiny_model):
    prefixes = np.array([[5, 0], [5, 1]])
    logits = tiny_model.next_distribution_logits(prefixes)
    full = tiny_model.forward(Tape(enabled=False), prefixes).data
    assert np.array_equal(logits, full[:, -1])


def test_parameter_set_copy_is_independent(tiny_model):
    copy = tiny_model.params.copy()
    copy["embedding"].data[0, 0] += 1.0
    assert tiny_model.params["embedding"].data[0, 0] != copy["embedding"].data[0, 0]
    assert copy.group("embedding") == PRIVATE


def test_broken_partition():
    params = create.create_parameters(
        ModelConfig(num_locations=3, hidden_dim=4, num_heads=1, num_layers=1),
        np.random.default_rng(0),
    )
    params._groups["embedding"] = "both"
    with pytest.raises(RegistryError):
        params.check_partition()
