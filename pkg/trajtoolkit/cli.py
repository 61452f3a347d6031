#!/usr/bin/env python

# Core Library modules
import functools
import itertools
import logging
import os
import sys
from typing import Any, Dict, List, Optional

# Third party modules
import click

# First party modules
import trajtoolkit
import trajtoolkit.data as data
import trajtoolkit.utils as utils
from trajtoolkit.config import RunConfig, load_config
from trajtoolkit.exceptions import ConfigError, TrajToolkitError

logger = logging.getLogger(__name__)

EXIT_CODES = {"config": 2, "data": 3}
ABLATION_ROWS = (
    ("NONE", False, False),
    ("w/o HA", False, True),
    ("w/o PO", True, False),
    ("COLA", True, True),
)
PROJ_GRID = (1, 2, 3)


def handle_errors(command):
    """Turn library errors into one ``error[<category>]`` line and exit code."""

    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except TrajToolkitError as exc:
            category = exc.category
            message = str(exc)
        except (ValueError, IndexError, FloatingPointError) as exc:
            category = "argument"
            message = str(exc)
        except (OSError, KeyError) as exc:
            # unreadable or incomplete input files
            category = "data"
            message = f"{type(exc).__name__}: {exc}"
        logger.debug("command failed", exc_info=True)
        click.echo(f"error[{category}]: {message}", err=True)
        sys.exit(EXIT_CODES.get(category, 1))

    return wrapper


class Context:
    """Options of the command group shared by every subcommand."""

    def __init__(self, config_file, seeds, out):
        self.config_file = config_file
        self._seeds = list(seeds)
        self._out = out
        self._config: Optional[RunConfig] = None

    @property
    def config(self) -> RunConfig:
        if self._config is None:
            self._config = load_config(self.config_file)
        return self._config

    @property
    def seeds(self) -> List[int]:
        return self._seeds or self.config.seeds

    @property
    def out(self) -> str:
        return self._out or self.config.output

    def run_dir(self, command: str, city: str, seed: Optional[int] = None) -> str:
        parts = [self.out, command, city]
        if seed is not None:
            parts.append(f"seed-{seed}")
        directory = os.path.join(*parts)
        os.makedirs(directory, exist_ok=True)
        return directory

    def write_manifest(self, directory: str, **extra: Any):
        manifest = {
            "config_hash": self.config.hash,
            "version": trajtoolkit.__version__,
        }
        manifest.update(extra)
        utils.dump_yaml(manifest, os.path.join(directory, "manifest.yml"))


pass_context = click.make_pass_decorator(Context)


@click.group()
@click.version_option(version=trajtoolkit.__version__)
@click.option(
    "--config",
    "config_file",
    help="YAML run configuration",
    type=click.Path(dir_okay=False, file_okay=True, exists=True),
)
@click.option(
    "--seed", "seeds", type=int, multiple=True, help="seed (repeatable)"
)
@click.option(
    "--out",
    help="output directory",
    type=click.Path(dir_okay=True, file_okay=False),
)
@click.option("--verbose", is_flag=True, help="log debug messages")
@click.pass_context
def entry_point(ctx, config_file, seeds, out, verbose):
    """trajtoolkit trains and evaluates cross-city trajectory generators."""
    logging.basicConfig(
        format="%(asctime)s %(levelname)s %(message)s",
        level=logging.DEBUG if verbose else logging.INFO,
        stream=sys.stderr,
    )
    ctx.obj = Context(config_file, seeds, out)


city_option = click.option(
    "--city", help="city name from the config (default: the configured target)"
)


def _split_names(value: Optional[str]) -> Optional[List[str]]:
    if value is None:
        return None
    return [name.strip() for name in value.split(",") if name.strip()]


@entry_point.command()
@pass_context
@handle_errors
def synth(ctx: Context):
    """Build every configured city and write its dataset directory."""
    for name in ctx.config.city_names():
        dataset = ctx.config.load_city(name)
        directory = os.path.join(ctx.out, "data", name)
        data.write_dataset(dataset, directory)
        logger.info(f"Wrote {dataset} to {directory}")


@entry_point.command()
@click.argument("raw", type=click.Path(dir_okay=False, exists=True))
@click.argument("out_dir", type=click.Path(file_okay=False))
@click.option("--name", default=None, help="city name (default: OUT_DIR name)")
@click.option("--min-visits", default=data.MIN_VISITS_PER_DAY, type=int)
@click.option("--seed", default=0, type=int, help="seed of the split")
@handle_errors
def ingest(raw, out_dir, name, min_visits, seed):
    """Turn a raw check-in CSV into a dataset directory."""
    name = name or os.path.basename(os.path.normpath(out_dir))
    dataset = data.ingest(
        data.read_raw_records(raw), name=name, seed=seed, min_visits=min_visits
    )
    data.write_dataset(dataset, out_dir)
    logger.info(f"Wrote {dataset} to {out_dir}")


def _score(model, dataset: data.CityDataset) -> Dict[str, float]:
    # First party modules
    import trajtoolkit.test

    if not dataset.valid:
        return {}
    return trajtoolkit.test.main(model, dataset.valid)


@entry_point.command()
@city_option
@click.option("--epochs", type=int, default=None, help="default: train.epochs")
@pass_context
@handle_errors
def train(ctx: Context, city, epochs):
    """Train a single-city model from scratch."""
    # First party modules
    import trajtoolkit.train

    config = ctx.config
    name = config.target(city)
    settings = config.tree["train"]
    epochs = settings["epochs"] if epochs is None else epochs
    if epochs < 1:
        raise click.BadParameter("epochs must be at least 1", param_hint="--epochs")
    dataset = config.load_city(name)
    model_config = config.model_config(dataset.num_locations)
    for seed in ctx.seeds:
        directory = ctx.run_dir("train", name, seed)
        model = trajtoolkit.train.main(
            dataset,
            model_config,
            os.path.join(directory, "model.tar"),
            os.path.join(directory, "trace.csv"),
            epochs,
            settings["learning_rate"],
            settings["batch_size"],
            seed,
            metadata={"city": name, "seed": seed},
        )
        ctx.write_manifest(
            directory, city=name, seed=seed, epochs=epochs, valid=_score(model, dataset)
        )


def run_transfer_seed(
    config: RunConfig,
    target: data.CityDataset,
    sources: List[data.CityDataset],
    seed: int,
    directory: str,
    half_open: Optional[bool] = None,
    proj_layers: Optional[int] = None,
):
    """Run the cross-city loop for one seed and write model and trace."""
    # First party modules
    import trajtoolkit.train
    import trajtoolkit.transfer as transfer

    base = config.model_config(target.num_locations, half_open, proj_layers)
    transfer_config = config.transfer_config([s.name for s in sources])
    registry = transfer.CityModelRegistry.create(
        base, target, sources, transfer_config, seed
    )
    datasets = {d.name: d for d in [target] + sources}
    result = transfer.run_transfer(
        registry,
        datasets,
        transfer_config,
        seed=seed,
        checkpoint_dir=os.path.join(directory, "checkpoints"),
    )
    model_file = os.path.join(directory, "model.tar")
    utils.write_checkpoint(
        model_file,
        result.target.params,
        result.target.config,
        {"city": target.name, "seed": seed, "sources": transfer_config.source_cities},
    )
    trajtoolkit.train.write_trace(os.path.join(directory, "trace.csv"), result.trace)
    return result.target, model_file


@entry_point.command()
@city_option
@click.option("--sources", help="comma separated source cities (may be empty)")
@click.option(
    "--combinations", is_flag=True, help="run every non-empty subset of the sources"
)
@click.option("--no-half-open", is_flag=True, help="share all but the embedding")
@pass_context
@handle_errors
def transfer(ctx: Context, city, sources, combinations, no_half_open):
    """Train the target city with parameters shared across source cities."""
    config = ctx.config
    name = config.target(city)
    source_names = config.sources(name, _split_names(sources))
    target = config.load_city(name)
    loaded = {s: config.load_city(s) for s in source_names}
    if combinations:
        if not source_names:
            raise ConfigError("--combinations needs at least one source city")
        subsets = [
            list(subset)
            for k in range(1, len(source_names) + 1)
            for subset in itertools.combinations(source_names, k)
        ]
    else:
        subsets = [source_names]
    half_open = False if no_half_open else None
    for seed in ctx.seeds:
        for subset in subsets:
            directory = ctx.run_dir("transfer", name, seed)
            if combinations:
                label = "+".join(subset)
                directory = os.path.join(directory, f"sources-{label}")
                os.makedirs(directory, exist_ok=True)
            model, _ = run_transfer_seed(
                config,
                target,
                [loaded[s] for s in subset],
                seed,
                directory,
                half_open,
            )
            ctx.write_manifest(
                directory,
                city=name,
                seed=seed,
                sources=subset,
                half_open=model.config.half_open,
                valid=_score(model, target),
            )


def simulate_seed(
    config: RunConfig,
    model,
    dataset: data.CityDataset,
    seed: int,
    directory: str,
    checkpoint: Optional[str],
    tau: Optional[float] = None,
    adjust: Optional[bool] = None,
):
    # First party modules
    import trajtoolkit.simulate as simulate

    settings = config.simulation_config(seed, tau, adjust).resolve(dataset.test)
    trajectories = simulate.simulate(
        model, settings, dataset.vocabulary, dataset.profile
    )
    simulate.write_simulation(
        directory, trajectories, settings, checkpoint, {"city": dataset.name}
    )
    return trajectories


@entry_point.command()
@click.option(
    "--checkpoint",
    required=True,
    type=click.Path(dir_okay=False, exists=True),
    help="trained model (.tar)",
)
@city_option
@click.option("--tau", type=float, default=None, help="adjustment strength")
@click.option("--no-post-hoc", is_flag=True, help="sample without adjustment")
@pass_context
@handle_errors
def simulate(ctx: Context, checkpoint, city, tau, no_post_hoc):
    """Generate trajectories with a trained model."""
    # First party modules
    from trajtoolkit.model import HalfOpenTransformer

    config = ctx.config
    name = config.target(city)
    dataset = config.load_city(name)
    model_config, params, _ = utils.read_checkpoint(checkpoint)
    if model_config is None:
        raise click.BadParameter("not a full city model", param_hint="--checkpoint")
    model = HalfOpenTransformer(model_config, params)
    adjust = False if no_post_hoc else None
    for seed in ctx.seeds:
        directory = ctx.run_dir("simulate", name, seed)
        simulate_seed(config, model, dataset, seed, directory, checkpoint, tau, adjust)
        ctx.write_manifest(directory, city=name, seed=seed, checkpoint=checkpoint)


@entry_point.command()
@click.argument(
    "simulated", nargs=-1, required=True, type=click.Path(dir_okay=False, exists=True)
)
@city_option
@click.option("--split", default="test", type=click.Choice(data.SPLITS))
@click.option(
    "--attention",
    type=click.Path(dir_okay=False, exists=True),
    help="model (.tar) whose attention profile is dumped",
)
@pass_context
@handle_errors
def evaluate(ctx: Context, simulated, city, split, attention):
    """Compare simulated corpora (one per seed) with a real split."""
    # First party modules
    import trajtoolkit.evaluate as evaluate

    config = ctx.config
    name = config.target(city)
    dataset = config.load_city(name)
    real = dataset.split(split)
    reports = []
    rows = {}
    for index, path in enumerate(simulated):
        directory = ctx.run_dir("evaluate", name, index)
        report = evaluate.main(
            real,
            data.read_trajectories(path),
            dataset.vocabulary,
            directory,
            {"city": name, "split": split, "simulated": path, "config": config.hash},
        )
        reports.append(report)
        rows[f"run-{index}"] = report.scores
    mean = evaluate.MetricReport.mean(reports, city=name, config=config.hash)
    directory = ctx.run_dir("evaluate", name)
    mean.write_csv(os.path.join(directory, "metrics-mean.csv"))
    mean.write_yaml(os.path.join(directory, "metrics-mean.yml"))
    rows["mean"] = mean.scores
    evaluate.show_results(rows)
    if attention:
        # First party modules
        from trajtoolkit.model import HalfOpenTransformer

        model_config, params, _ = utils.read_checkpoint(attention)
        model = HalfOpenTransformer(model_config, params)
        evaluate.attention_profile(model, real, dataset.vocabulary).write(directory)


@entry_point.command()
@city_option
@click.option(
    "--grid", is_flag=True, help="also sweep tau and proj_layers for the full model"
)
@pass_context
@handle_errors
def ablate(ctx: Context, city, grid):
    """Switch half-open sharing and post-hoc adjustment on and off."""
    # First party modules
    import trajtoolkit.evaluate as evaluate
    from trajtoolkit.simulate import TAU_GRID

    config = ctx.config
    name = config.target(city)
    target = config.load_city(name)
    sources = [config.load_city(s) for s in config.sources(name)]
    tables: Dict[str, Dict[str, list]] = {
        "ablation": {label: [] for label, _, _ in ABLATION_ROWS},
        "tau-grid": {f"tau={tau:g}": [] for tau in TAU_GRID},
        "proj-grid": {f"proj_layers={k}": [] for k in PROJ_GRID},
    }
    for seed in ctx.seeds:
        # (table, label, half_open, post_hoc, tau, proj_layers)
        runs = [
            ("ablation", label, ha, po, None, None) for label, ha, po in ABLATION_ROWS
        ]
        if grid:
            runs += [
                ("tau-grid", f"tau={tau:g}", True, True, tau, None) for tau in TAU_GRID
            ]
            runs += [
                ("proj-grid", f"proj_layers={k}", True, True, None, k)
                for k in PROJ_GRID
            ]
        models = {}
        for _, _, half_open, _, _, proj_layers in runs:
            if (half_open, proj_layers) in models:
                continue
            suffix = "" if proj_layers is None else f"-proj-{proj_layers}"
            directory = os.path.join(
                ctx.run_dir("ablate", name, seed),
                f"half-open-{str(half_open).lower()}{suffix}",
            )
            os.makedirs(directory, exist_ok=True)
            models[half_open, proj_layers] = run_transfer_seed(
                config, target, sources, seed, directory, half_open, proj_layers
            )
        for table, label, half_open, post_hoc, tau, proj_layers in runs:
            model, checkpoint = models[half_open, proj_layers]
            safe = label.replace("/", "").replace(" ", "-").replace("=", "-")
            directory = os.path.join(ctx.run_dir("ablate", name, seed), safe)
            trajectories = simulate_seed(
                config, model, target, seed, directory, checkpoint, tau, post_hoc
            )
            report = evaluate.main(
                target.test,
                trajectories,
                target.vocabulary,
                directory,
                {"city": name, "seed": seed, "row": label, "config": config.hash},
            )
            tables[table][label].append(report)
    directory = ctx.run_dir("ablate", name)
    for table, rows in tables.items():
        means = {
            label: evaluate.MetricReport.mean(reports).scores
            for label, reports in rows.items()
            if reports
        }
        if not means:
            continue
        _write_table(os.path.join(directory, f"{table}.csv"), means)
        evaluate.show_results(means, with_rank=True)
    ctx.write_manifest(directory, city=name, seeds=ctx.seeds, grid=grid)


def _write_table(path: str, rows: Dict[str, Dict[str, float]]):
    # First party modules
    from trajtoolkit.evaluate import METRICS, average_rank

    ranks = average_rank(rows)
    utils.write_csv(
        path,
        ("method",) + METRICS + ("avg_rank",),
        (
            [label] + [rows[label][m] for m in METRICS] + [ranks[label]]
            for label in rows
        ),
    )


@entry_point.command()
@click.argument(
    "reports", nargs=-1, required=True, type=click.Path(dir_okay=False, exists=True)
)
@click.option(
    "-o", "--output", type=click.Path(dir_okay=False), help="write the table as CSV"
)
@handle_errors
def report(reports, output):
    """Tabulate metric reports (metrics.yml) with their average rank."""
    # First party modules
    from trajtoolkit.evaluate import MetricReport, show_results

    rows = {}
    for path in reports:
        loaded = MetricReport.read_yaml(path)
        label = loaded.metadata.get("row") or os.path.basename(os.path.dirname(path))
        if label in rows:
            label = path
        rows[label] = loaded.scores
    show_results(rows, with_rank=True)
    if output:
        _write_table(output, rows)


if __name__ == "__main__":
    entry_point()
