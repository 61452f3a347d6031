#!/usr/bin/env python

# Core Library modules
import glob
import os

# Third party modules
import pytest
import yaml
from click.testing import CliRunner

# First party modules
import trajtoolkit.data as data
import trajtoolkit.utils as utils
from trajtoolkit.cli import entry_point


def tiny_city(name, seed):
    return {
        "name": name,
        "seed": seed,
        "synth": {"num_locations": 12, "num_users": 10, "extent_km": 5.0},
    }


@pytest.fixture
def run_config(tmp_path):
    tree = {
        "model": {
            "hidden_dim": 8,
            "num_heads": 2,
            "num_layers": 1,
            "dropout_rate": 0.0,
            "mlp_ratio": 2,
        },
        "transfer": {
            "meta_epochs": 1,
            "source_epochs": 1,
            "target_epochs": 1,
            "batch_size": 64,
        },
        "train": {"epochs": 1, "batch_size": 64},
        "simulation": {"num_trajectories": 4},
        "cities": [tiny_city(name, i) for i, name in enumerate("abct")],
        "target": "t",
    }
    path = tmp_path / "run.yml"
    path.write_text(yaml.safe_dump(tree))
    return str(path)


def invoke(run_config, tmp_path, *args):
    runner = CliRunner()
    return runner.invoke(
        entry_point,
        ["--config", run_config, "--out", str(tmp_path / "out"), *args],
        catch_exceptions=False,
    )


def test_synth(run_config, tmp_path):
    result = invoke(run_config, tmp_path, "synth")
    assert result.exit_code == 0, result.output
    dataset = data.read_dataset(str(tmp_path / "out" / "data" / "b"))
    assert dataset.name == "b"
    assert dataset.num_locations == 12


def test_train_simulate_evaluate(run_config, tmp_path):
    result = invoke(run_config, tmp_path, "--seed", "0", "--seed", "1", "train")
    assert result.exit_code == 0, result.output
    run_dir = tmp_path / "out" / "train" / "t"
    assert sorted(os.listdir(run_dir)) == ["seed-0", "seed-1"]
    manifest = utils.load_yaml(str(run_dir / "seed-0" / "manifest.yml"))
    assert set(manifest["valid"]) == {"loss", "top1", "top5", "count"}

    checkpoint = str(run_dir / "seed-0" / "model.tar")
    result = invoke(run_config, tmp_path, "simulate", "--checkpoint", checkpoint)
    assert result.exit_code == 0, result.output
    simulated = str(tmp_path / "out" / "simulate" / "t" / "seed-0" / "simulated.tsv")
    assert len(data.read_trajectories(simulated)) == 4

    result = invoke(run_config, tmp_path, "evaluate", simulated)
    assert result.exit_code == 0, result.output
    assert "g_rank" in result.output
    mean = tmp_path / "out" / "evaluate" / "t" / "metrics-mean.yml"
    assert os.path.isfile(mean)

    report_file = str(tmp_path / "table.csv")
    result = invoke(run_config, tmp_path, "report", str(mean), "-o", report_file)
    assert result.exit_code == 0, result.output
    assert "avg_rank" in utils.read_csv(report_file)[0]


def test_transfer_combinations(run_config, tmp_path):
    result = invoke(run_config, tmp_path, "transfer", "--combinations")
    assert result.exit_code == 0, result.output
    runs = glob.glob(str(tmp_path / "out" / "transfer" / "t" / "seed-0" / "sources-*"))
    assert len(runs) == 7
    labels = sorted(os.path.basename(run) for run in runs)
    assert "sources-none" not in labels
    assert "sources-a" in labels
    assert "sources-a+b+c" in labels
    manifest = utils.load_yaml(os.path.join(runs[0], "manifest.yml"))
    assert manifest["half_open"] is True


def test_transfer_without_half_open(run_config, tmp_path):
    args = ["transfer", "--sources", "a", "--no-half-open"]
    result = invoke(run_config, tmp_path, *args)
    assert result.exit_code == 0, result.output
    directory = tmp_path / "out" / "transfer" / "t" / "seed-0"
    config, params, metadata = utils.read_checkpoint(str(directory / "model.tar"))
    assert config.half_open is False
    assert params.private_names() == ["embedding"]
    assert metadata["sources"] == ["a"]


def test_ablate(run_config, tmp_path):
    result = invoke(run_config, tmp_path, "ablate", "--city", "c")
    assert result.exit_code == 0, result.output
    rows = utils.read_csv(str(tmp_path / "out" / "ablate" / "c" / "ablation.csv"))
    assert [row["method"] for row in rows] == ["NONE", "w/o HA", "w/o PO", "COLA"]


def test_combinations_need_sources(run_config, tmp_path):
    result = invoke(run_config, tmp_path, "transfer", "--sources", "", "--combinations")
    assert result.exit_code == 2
    assert "error[config]" in result.output


def test_ablate_grid(run_config, tmp_path):
    result = invoke(run_config, tmp_path, "ablate", "--grid")
    assert result.exit_code == 0, result.output
    directory = tmp_path / "out" / "ablate" / "t"
    taus = utils.read_csv(str(directory / "tau-grid.csv"))
    assert len(taus) == 6
    depths = utils.read_csv(str(directory / "proj-grid.csv"))
    assert [row["method"] for row in depths] == [
        "proj_layers=1",
        "proj_layers=2",
        "proj_layers=3",
    ]
    for k in (1, 2, 3):
        model_file = directory / "seed-0" / f"half-open-true-proj-{k}" / "model.tar"
        config, _, _ = utils.read_checkpoint(str(model_file))
        assert config.proj_layers == k


def test_reruns_write_identical_files(run_config, tmp_path):
    out = tmp_path / "out"
    checkpoint = str(out / "train" / "t" / "seed-0" / "model.tar")
    simulated = str(out / "simulate" / "t" / "seed-0" / "simulated.tsv")
    commands = [
        ["train"],
        ["transfer", "--sources", "a,b"],
        ["simulate", "--checkpoint", checkpoint],
        ["evaluate", simulated],
    ]

    def run_all():
        for command in commands:
            result = invoke(run_config, tmp_path, *command)
            assert result.exit_code == 0, result.output
        contents = {}
        for root, _, files in os.walk(out):
            for name in files:
                path = os.path.join(root, name)
                with open(path, "rb") as f:
                    contents[os.path.relpath(path, out)] = f.read()
        return contents

    first = run_all()
    assert any(path.startswith("evaluate") for path in first)
    assert run_all() == first


def test_unreadable_dataset_exit_code(tmp_path):
    empty = tmp_path / "empty"
    empty.mkdir()
    path = tmp_path / "run.yml"
    tree = {"cities": [{"name": "e", "path": str(empty)}], "target": "e"}
    path.write_text(yaml.safe_dump(tree))
    result = CliRunner().invoke(
        entry_point, ["--config", str(path), "--out", str(tmp_path), "train"]
    )
    assert result.exit_code == 3
    assert "error[data]: FileNotFoundError" in result.output


def test_config_error_exit_code(tmp_path):
    path = tmp_path / "bad.yml"
    path.write_text("modle: {}\n")
    result = CliRunner().invoke(entry_point, ["--config", str(path), "synth"])
    assert result.exit_code == 2
    assert "error[config]" in result.output


def test_unknown_city(run_config, tmp_path):
    result = invoke(run_config, tmp_path, "train", "--city", "nowhere")
    assert result.exit_code == 2
    assert "error[config]" in result.output


def test_ingest_error_exit_code(tmp_path):
    raw = tmp_path / "raw.csv"
    raw.write_text("alice,2020-01-01T08:00:00,39.9,116.4,k1\n")
    out_dir = str(tmp_path / "city")
    result = CliRunner().invoke(entry_point, ["ingest", str(raw), out_dir])
    assert result.exit_code == 3
    assert "error[data]" in result.output


def test_ingest(tmp_path):
    lines = [
        f"u{u},{data.slot_to_timestamp(24 * u + h)},39.9,{116.4 + h / 100},k{h}"
        for u in range(5)
        for h in range(6)
    ]
    raw = tmp_path / "raw.csv"
    raw.write_text("\n".join(lines) + "\n")
    out_dir = str(tmp_path / "city")
    result = CliRunner().invoke(entry_point, ["ingest", str(raw), out_dir])
    assert result.exit_code == 0, result.output
    dataset = data.read_dataset(out_dir)
    assert dataset.name == "city"
    assert dataset.num_locations == 6


def test_synth_is_deterministic(run_config, tmp_path):
    def contents():
        files = sorted(glob.glob(str(tmp_path / "out" / "data" / "*" / "*")))
        result = {}
        for path in files:
            with open(path, "rb") as f:
                result[os.path.relpath(path, tmp_path)] = f.read()
        return result

    assert invoke(run_config, tmp_path, "synth").exit_code == 0
    first = contents()
    assert invoke(run_config, tmp_path, "synth").exit_code == 0
    assert len(first) == 4 * 6
    assert contents() == first
