#!/usr/bin/env python

"""End-to-end checks on synthetic cities. Run with ``pytest -m slow``."""

# Core Library modules
import dataclasses

# Third party modules
import numpy as np
import pytest
import yaml
from click.testing import CliRunner

# First party modules
import trajtoolkit.data as data
import trajtoolkit.evaluate as evaluate
import trajtoolkit.test as scoring
import trajtoolkit.train as train
import trajtoolkit.transfer as transfer
from trajtoolkit.cli import entry_point
from trajtoolkit.model import HalfOpenTransformer, ModelConfig
from trajtoolkit.simulate import SimulationConfig, scaling_law_error, simulate
from trajtoolkit.tensor import Tape, numerical_gradient

pytestmark = pytest.mark.slow

SEEDS = range(5)


def small_model(num_locations, **kwargs):
    settings = dict(
        hidden_dim=32,
        num_heads=4,
        num_layers=2,
        max_seq_len=24,
        dropout_rate=0.0,
        mlp_ratio=2,
    )
    settings.update(kwargs)
    return ModelConfig(num_locations=num_locations, **settings)


@pytest.fixture(scope="module")
def zipf_city():
    return data.synth_city(
        seed=11, num_locations=60, num_users=300, gamma=1.2, name="zipf"
    )


@pytest.mark.parametrize("seed", range(20))
def test_end_to_end_gradient(seed):
    config = ModelConfig(
        num_locations=5,
        hidden_dim=8,
        num_heads=2,
        num_layers=2,
        max_seq_len=4,
        dropout_rate=0.0,
        mlp_ratio=2,
    )
    rng = np.random.default_rng(seed)
    model = HalfOpenTransformer.create(config, rng)
    for tensor in model.params.values():
        tensor.data += rng.normal(scale=0.1, size=tensor.shape)
    batch = data.Batch(
        ids=np.c_[np.full(2, 5), rng.integers(0, 5, size=(2, 4))],
        mask=np.ones((2, 5), dtype=bool),
    )
    tape = Tape()
    tape.backward(model.internal_loss(tape, batch))
    for name, tensor in model.params.items():
        expected = numerical_gradient(
            lambda: model.internal_loss(Tape(enabled=False), batch).item(), tensor
        )
        np.testing.assert_allclose(
            tensor.grad, expected, rtol=1e-3, atol=1e-6, err_msg=name
        )


@pytest.mark.parametrize("gamma", [0.8, 1.2, 2.0])
@pytest.mark.parametrize("tau", [0.1, 0.5, 1.0])
def test_scaling_law_on_grid(gamma, tau):
    logits = np.random.default_rng(0).normal(size=50)
    assert scaling_law_error(logits, gamma, 1.0, tau) < 1e-10


def test_memorises_repeating_corpus(cycle_city):
    config = small_model(6, hidden_dim=16, num_heads=2, num_layers=1, max_seq_len=6)
    _, trace = train.train_single_city(
        cycle_city, config, epochs=200, learning_rate=1e-2, batch_size=7
    )
    assert trace[-1].mean_loss < 0.1


def test_transfer_helps_small_target():
    """A larger city with the same transition structure helps a small one."""
    wins = 0
    target = data.synth_city(seed=21, num_locations=40, num_users=100, name="target")
    larger = data.synth_city(seed=21, num_locations=40, num_users=600)
    source = data.relabel_city(larger, seed=5, name="source")
    datasets = {"source": source, "target": target}
    for seed in SEEDS:
        base = small_model(40)
        config = transfer.TransferConfig(
            meta_epochs=4, source_epochs=2, target_epochs=5, batch_size=32
        )
        registry = transfer.CityModelRegistry.create(
            base, target, [source], config, seed
        )
        transferred = transfer.run_transfer(registry, datasets, config, seed).target
        alone, _ = train.train_single_city(
            target, base, epochs=config.meta_epochs * config.target_epochs, seed=seed
        )
        with_sources = scoring.score_split(transferred, target.valid)["loss"]
        without = scoring.score_split(alone, target.valid)["loss"]
        wins += with_sources <= without
    assert wins >= 3


def test_adjustment_improves_global_rank(zipf_city):
    wins = 0
    for seed in SEEDS:
        model, _ = train.train_single_city(
            zipf_city, small_model(60), epochs=20, seed=seed
        )
        scores = {}
        for adjust in (False, True):
            settings = SimulationConfig(tau=0.25, seed=seed, adjust=adjust)
            settings = settings.resolve(zipf_city.test)
            corpus = simulate(model, settings, zipf_city.vocabulary, zipf_city.profile)
            p, q = evaluate.metric_grank(zipf_city.test, corpus)
            scores[adjust] = evaluate.jsd(p, q)
        wins += scores[True] <= scores[False]
    assert wins >= 4


def test_trained_model_beats_untrained(zipf_city):
    for seed in SEEDS:
        config = small_model(60)
        untrained = train.init_model(config, seed, zipf_city.name)
        trained, _ = train.train_single_city(zipf_city, config, epochs=20, seed=seed)
        settings = SimulationConfig(seed=seed).resolve(zipf_city.test)
        reports = {
            label: evaluate.evaluate_corpus(
                zipf_city.test,
                simulate(model, settings, zipf_city.vocabulary, zipf_city.profile),
                zipf_city.vocabulary,
            )
            for label, model in (("trained", trained), ("untrained", untrained))
        }
        for metric in ("distance", "duration", "g_rank"):
            assert (
                reports["trained"].scores[metric] < reports["untrained"].scores[metric]
            ), (seed, metric)


def test_full_sharing_keeps_training_stable(zipf_city):
    other = data.relabel_city(zipf_city, seed=5, name="other")
    config = transfer.TransferConfig(meta_epochs=2, target_epochs=2)
    base = dataclasses.replace(small_model(60), half_open=False)
    registry = transfer.CityModelRegistry.create(base, zipf_city, [other], config, 0)
    result = transfer.run_transfer(
        registry, {"zipf": zipf_city, "other": other}, config
    )
    assert all(np.isfinite(row.mean_loss) for row in result.trace)


def test_full_model_beats_plain_transfer_in_ablation(tmp_path):
    tree = {
        "model": {
            "hidden_dim": 32,
            "num_heads": 4,
            "num_layers": 2,
            "dropout_rate": 0.0,
            "mlp_ratio": 2,
        },
        "transfer": {
            "meta_epochs": 3,
            "source_epochs": 1,
            "target_epochs": 8,
            "batch_size": 32,
        },
        "cities": [
            {
                "name": "zipf",
                "seed": 11,
                "synth": {"num_locations": 60, "num_users": 300, "gamma": 1.2},
            },
            {
                "name": "larger",
                "seed": 11,
                "synth": {"num_locations": 60, "num_users": 900, "gamma": 1.2},
            },
            {"name": "source", "relabel": "larger"},
        ],
        "target": "zipf",
        "sources": ["source"],
        "seeds": list(SEEDS),
    }
    path = tmp_path / "run.yml"
    path.write_text(yaml.safe_dump(tree))
    out = tmp_path / "out"
    result = CliRunner().invoke(
        entry_point,
        ["--config", str(path), "--out", str(out), "ablate"],
        catch_exceptions=False,
    )
    assert result.exit_code == 0, result.output
    wins = 0
    for seed in SEEDS:
        directory = out / "ablate" / "zipf" / f"seed-{seed}"
        full = evaluate.MetricReport.read_yaml(str(directory / "COLA" / "metrics.yml"))
        plain = evaluate.MetricReport.read_yaml(str(directory / "NONE" / "metrics.yml"))
        better = sum(full.scores[m] <= plain.scores[m] for m in evaluate.METRICS)
        wins += better >= 4
    assert wins >= 3
