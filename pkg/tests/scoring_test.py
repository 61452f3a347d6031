#!/usr/bin/env python

# Core Library modules
import dataclasses

# Third party modules
import numpy as np
import pytest

# First party modules
import trajtoolkit.test as scoring
import trajtoolkit.train as train


def test_zero_embedding_scores_uniformly(cycle_city, tiny_config):
    config = dataclasses.replace(tiny_config, num_locations=6)
    model = train.init_model(config, 0, "cycle")
    model.params["embedding"].data[:] = 0.0
    scores = scoring.score_split(model, cycle_city.valid)
    assert scores["count"] == 6
    assert scores["loss"] == pytest.approx(np.log(6))
    # ties rank the lowest ids first
    assert scores["top1"] == pytest.approx(1 / 6)
    assert scores["top5"] == pytest.approx(5 / 6)


def test_main_logs_scores(cycle_city, tiny_config, caplog):
    config = dataclasses.replace(tiny_config, num_locations=6)
    model = train.init_model(config, 0, "cycle")
    with caplog.at_level("INFO"):
        scores = scoring.main(model, cycle_city.test)
    assert 0.0 <= scores["top1"] <= scores["top5"] <= 1.0
    assert "top-5" in caplog.text


def test_empty_split(tiny_model):
    with pytest.raises(ValueError):
        scoring.score_split(tiny_model, [])
