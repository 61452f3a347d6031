#!/usr/bin/env python

# Core Library modules
import dataclasses

# Third party modules
import numpy as np
import pytest

# First party modules
import trajtoolkit.data as data
import trajtoolkit.train as train
import trajtoolkit.utils as utils
from trajtoolkit.optimizers import SGD, Adam


def test_init_model_is_seeded(tiny_config):
    a = train.init_model(tiny_config, 1, "berlin")
    b = train.init_model(tiny_config, 1, "berlin")
    c = train.init_model(tiny_config, 1, "paris")
    assert np.array_equal(a.params["embedding"].data, b.params["embedding"].data)
    assert not np.array_equal(a.params["embedding"].data, c.params["embedding"].data)


def test_memorises_a_cycle(cycle_city, tiny_config):
    """The training loss on a fixed daily cycle goes down."""
    config = dataclasses.replace(tiny_config, num_locations=6)
    _, trace = train.train_single_city(
        cycle_city, config, epochs=60, learning_rate=1e-2, batch_size=4
    )
    losses = [row.mean_loss for row in trace]
    assert len(losses) == 60
    assert np.mean(losses[-5:]) < np.mean(losses[:5])
    assert {row.phase for row in trace} == {"target"}


def test_zero_learning_rate_leaves_parameters(cycle_city, tiny_config):
    model = train.init_model(dataclasses.replace(tiny_config, num_locations=6), 0, "x")
    before = model.params.state()
    train.internal_update(model, cycle_city.train, SGD(0.0), epochs=2, batch_size=3)
    for name, value in model.params.state().items():
        assert np.array_equal(value, before[name])


def test_update_in_pieces_equals_one_run(cycle_city, tiny_config):
    config = dataclasses.replace(tiny_config, num_locations=6, dropout_rate=0.2)
    whole = train.init_model(config, 0, "cycle")
    pieces = train.init_model(config, 0, "cycle")
    train.internal_update(whole, cycle_city.train, Adam(1e-2), 4, batch_size=3)
    optimizer = Adam(1e-2)
    train.internal_update(pieces, cycle_city.train, optimizer, 2, batch_size=3)
    train.internal_update(
        pieces, cycle_city.train, optimizer, 2, batch_size=3, epoch_offset=2
    )
    for name, value in whole.params.state().items():
        assert np.array_equal(value, pieces.params[name].data)


def test_internal_update_errors(tiny_model, cycle_city):
    with pytest.raises(ValueError):
        train.internal_update(tiny_model, [], SGD(0.1), epochs=1)
    with pytest.raises(ValueError):
        train.internal_update(tiny_model, cycle_city.train, SGD(0.1), epochs=0)


def test_compute_gradients_clears_parameter_gradients(cycle_city, tiny_config):
    model = train.init_model(dataclasses.replace(tiny_config, num_locations=6), 0, "x")
    config = model.config
    batches = list(
        data.batch(cycle_city.test, 8, config.max_seq_len, bos_id=config.bos_id)
    )
    gradients, loss = train.compute_gradients(model, batches)
    assert loss > 0
    assert set(gradients) == set(model.params)
    assert not any(tensor.grad.any() for tensor in model.params.values())
    with pytest.raises(ValueError):
        train.compute_gradients(model, [])


def test_main_writes_checkpoint_and_trace(tmp_path, cycle_city, tiny_config):
    config = dataclasses.replace(tiny_config, num_locations=6)
    model_file = str(tmp_path / "model.tar")
    trace_file = str(tmp_path / "trace.csv")
    model = train.main(cycle_city, config, model_file, trace_file, 2, 1e-3, 4, 0)
    loaded_config, params, _ = utils.read_checkpoint(model_file)
    assert loaded_config == config
    assert np.array_equal(params["embedding"].data, model.params["embedding"].data)
    rows = utils.read_csv(trace_file)
    assert len(rows) == 2
    assert rows[0]["phase"] == "target"
