#!/usr/bin/env python

"""Run configuration: defaults, merging of user files and validation."""

# Core Library modules
import copy
import inspect
import logging
import os
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

# First party modules
import trajtoolkit.data as data
import trajtoolkit.utils as utils
from trajtoolkit.exceptions import ConfigError
from trajtoolkit.model import ModelConfig
from trajtoolkit.simulate import SimulationConfig
from trajtoolkit.transfer import TransferConfig

logger = logging.getLogger(__name__)

DEFAULTS: Dict[str, Any] = {
    "model": {
        "hidden_dim": 96,
        "num_heads": 4,
        "num_layers": 2,
        "proj_layers": 1,
        "max_seq_len": 24,
        "dropout_rate": 0.1,
        "mlp_ratio": 4,
        "activation": "ReLU",
        "init_std": 0.02,
    },
    "transfer": {
        "meta_epochs": 5,
        "source_epochs": 1,
        "target_epochs": 50,
        "source_lr": 1e-3,
        "target_lr": 1e-3,
        "meta_lr": 5e-4,
        "batch_size": 32,
        "optimizer": "adam",
        "checkpoint_every": 0,
    },
    "train": {"epochs": 250, "learning_rate": 1e-3, "batch_size": 32},
    "simulation": {
        "tau": 0.25,
        "num_trajectories": None,
        "horizon": None,
        "batch_size": 256,
    },
    "ablation": {"half_open": True, "post_hoc": True},
    "data": {"min_visits": data.MIN_VISITS_PER_DAY, "epsilon": 1.0},
    "cities": [],
    "target": None,
    "sources": None,
    "seeds": [0],
    "output": "out",
}

CITY_SOURCES = ("synth", "raw", "path", "relabel")
SYNTH_KEYS = set(inspect.signature(data.synth_city).parameters) - {"name"}


def merge(defaults: Dict[str, Any], override: Dict[str, Any], prefix: str = ""):
    """
    Deep merge ``override`` into a copy of ``defaults``; unknown keys raise.

    >>> merge({"a": {"b": 1, "c": 2}}, {"a": {"c": 3}})
    {'a': {'b': 1, 'c': 3}}
    """
    result = copy.deepcopy(defaults)
    for key, value in (override or {}).items():
        if key not in defaults:
            raise ConfigError(f"unknown configuration key '{prefix}{key}'")
        if isinstance(defaults[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"'{prefix}{key}' must be a mapping")
            result[key] = merge(defaults[key], value, f"{prefix}{key}.")
        else:
            result[key] = copy.deepcopy(value)
    return result


def _check_city(entry: Any, index: int) -> Dict[str, Any]:
    if not isinstance(entry, dict) or "name" not in entry:
        raise ConfigError(f"cities[{index}] needs a 'name'")
    unknown = set(entry) - {"name", "seed"} - set(CITY_SOURCES)
    if unknown:
        raise ConfigError(f"unknown key(s) {sorted(unknown)} in city '{entry['name']}'")
    kinds = [kind for kind in CITY_SOURCES if kind in entry]
    if len(kinds) != 1:
        raise ConfigError(
            f"city '{entry['name']}' needs exactly one of {', '.join(CITY_SOURCES)}"
        )
    kind = kinds[0]
    if kind == "synth":
        unknown = set(entry["synth"] or {}) - SYNTH_KEYS
        if unknown:
            raise ConfigError(f"unknown synth key(s) {sorted(unknown)}")
    if kind == "raw" and not os.path.isfile(entry["raw"]):
        raise ConfigError(f"raw file '{entry['raw']}' does not exist")
    if kind == "path" and not os.path.isdir(entry["path"]):
        raise ConfigError(f"dataset directory '{entry['path']}' does not exist")
    return entry


@dataclass
class RunConfig:
    """Validated view of a merged configuration tree."""

    tree: Dict[str, Any]
    cities: List[Dict[str, Any]] = field(init=False)

    def __post_init__(self):
        self.cities = [_check_city(c, i) for i, c in enumerate(self.tree["cities"])]
        names = [c["name"] for c in self.cities]
        if len(set(names)) != len(names):
            raise ConfigError(f"city names are not unique: {names}")
        for city in self.cities:
            if "relabel" in city and city["relabel"] not in names:
                raise ConfigError(
                    f"'{city['name']}' relabels unknown '{city['relabel']}'"
                )
        seeds = self.tree["seeds"]
        if not isinstance(seeds, list) or not seeds:
            raise ConfigError("seeds must be a non-empty list")
        for name in [self.tree["target"]] + list(self.tree["sources"] or []):
            if name is not None and name not in names:
                raise ConfigError(f"unknown city '{name}'")
        # fail early on invalid hyperparameters
        self.model_config(1)
        self.transfer_config([])
        self.simulation_config(seeds[0])
        if self.tree["train"]["epochs"] < 1:
            raise ConfigError("train.epochs must be at least 1")

    @property
    def seeds(self) -> List[int]:
        return [int(s) for s in self.tree["seeds"]]

    @property
    def output(self) -> str:
        return self.tree["output"]

    @property
    def hash(self) -> str:
        return utils.config_hash(self.tree)

    def city_names(self) -> List[str]:
        return [c["name"] for c in self.cities]

    def target(self, name: Optional[str] = None) -> str:
        target = name or self.tree["target"]
        if target is None:
            raise ConfigError("no target city configured")
        if target not in self.city_names():
            raise ConfigError(f"unknown city '{target}'")
        return target

    def sources(self, target: str, names: Optional[List[str]] = None) -> List[str]:
        """Source cities in config order; all non-target cities by default."""
        if names is None:
            names = self.tree["sources"]
        if names is None:
            names = [n for n in self.city_names() if n != target]
        for name in names:
            if name not in self.city_names():
                raise ConfigError(f"unknown city '{name}'")
        if target in names:
            raise ConfigError(f"'{target}' cannot be its own source")
        return list(names)

    def model_config(
        self,
        num_locations: int,
        half_open: Optional[bool] = None,
        proj_layers: Optional[int] = None,
    ):
        if half_open is None:
            half_open = self.tree["ablation"]["half_open"]
        values = dict(self.tree["model"])
        if proj_layers is not None:
            values["proj_layers"] = proj_layers
        return ModelConfig(num_locations=num_locations, half_open=half_open, **values)

    def transfer_config(self, sources: List[str]) -> TransferConfig:
        return TransferConfig(source_cities=list(sources), **self.tree["transfer"])

    def simulation_config(
        self,
        seed: int,
        tau: Optional[float] = None,
        adjust: Optional[bool] = None,
    ) -> SimulationConfig:
        values = dict(self.tree["simulation"])
        if tau is not None:
            values["tau"] = tau
        if adjust is None:
            adjust = self.tree["ablation"]["post_hoc"]
        return SimulationConfig(seed=seed, adjust=adjust, **values)

    def city(self, name: str) -> Dict[str, Any]:
        for entry in self.cities:
            if entry["name"] == name:
                return entry
        raise ConfigError(f"unknown city '{name}'")

    def load_city(self, name: str) -> data.CityDataset:
        """Build or read the dataset of city ``name``."""
        entry = self.city(name)
        seed = int(entry.get("seed", utils.derive_seed("city", name)))
        if "synth" in entry:
            settings = dict({"seed": seed}, **(entry["synth"] or {}))
            return data.synth_city(name=name, **settings)
        if "raw" in entry:
            return data.ingest(
                data.read_raw_records(entry["raw"]),
                name=name,
                seed=seed,
                min_visits=self.tree["data"]["min_visits"],
                epsilon=self.tree["data"]["epsilon"],
            )
        if "relabel" in entry:
            return data.relabel_city(self.load_city(entry["relabel"]), seed, name)
        dataset = data.read_dataset(entry["path"])
        dataset.name = name
        return dataset


def from_dict(tree: Optional[Dict[str, Any]]) -> RunConfig:
    return RunConfig(merge(DEFAULTS, tree or {}))


def load_config(path: Optional[str]) -> RunConfig:
    """Read a YAML run config; without ``path`` all defaults are used."""
    if path is None:
        return from_dict({})
    tree = utils.load_yaml(path)
    if tree is not None and not isinstance(tree, dict):
        raise ConfigError(f"'{path}' does not contain a mapping")
    config = from_dict(tree)
    logger.debug("Loaded config %s (hash %s)", path, config.hash[:12])
    return config
