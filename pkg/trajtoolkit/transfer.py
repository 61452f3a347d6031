#!/usr/bin/env python

"""Cross-city transfer: meta clone, internal update and meta update."""

# Core Library modules
import dataclasses
import logging
import os
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Optional

# Third party modules
import numpy as np

# First party modules
import trajtoolkit.data as data
import trajtoolkit.utils as utils
from trajtoolkit.exceptions import ConfigError, RegistryError
from trajtoolkit.model import SHARED, HalfOpenTransformer, ModelConfig, ParameterSet
from trajtoolkit.optimizers import SGD, Optimizer, get_optimizer
from trajtoolkit.train import TraceRow, compute_gradients, init_model, internal_update

logger = logging.getLogger(__name__)

# (city, private state before the clone, params after the clone, meta)
CloneHook = Callable[[str, Dict[str, np.ndarray], ParameterSet, ParameterSet], None]


@dataclass
class TransferConfig:
    """Epoch counts, learning rates and source order of a transfer run."""

    meta_epochs: int = 5
    source_epochs: int = 1
    target_epochs: int = 50
    source_lr: float = 1e-3
    target_lr: float = 1e-3
    meta_lr: float = 5e-4
    batch_size: int = 32
    optimizer: str = "adam"
    source_cities: List[str] = field(default_factory=list)
    checkpoint_every: int = 0

    def __post_init__(self):
        for name in ("meta_epochs", "source_epochs", "target_epochs", "batch_size"):
            if getattr(self, name) < 1:
                raise ConfigError(
                    f"{name} must be at least 1, not {getattr(self, name)}"
                )
        for name in ("source_lr", "target_lr", "meta_lr"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive, not {getattr(self, name)}")
        if self.checkpoint_every < 0:
            raise ConfigError("checkpoint_every must not be negative")
        if len(set(self.source_cities)) != len(self.source_cities):
            raise ConfigError(f"duplicate source city in {self.source_cities}")


@dataclass
class CityModelRegistry:
    """The meta parameters and the per-city models with their optimizers."""

    meta: ParameterSet
    sources: Dict[str, HalfOpenTransformer]
    target: HalfOpenTransformer
    target_name: str
    optimizers: Dict[str, Optimizer]

    @classmethod
    def create(
        cls,
        base_config: ModelConfig,
        target: data.CityDataset,
        sources: Iterable[data.CityDataset],
        config: TransferConfig,
        seed: int,
    ) -> "CityModelRegistry":
        """
        Initialise one model per city; ``num_locations`` is taken from each
        dataset. The meta model starts as a copy of the target's shared group.
        """
        sources = list(sources)
        if target.name in {s.name for s in sources}:
            raise ConfigError(f"'{target.name}' is both target and source")

        def build(dataset):
            city_config = dataclasses.replace(
                base_config, num_locations=dataset.num_locations
            )
            return init_model(city_config, seed, dataset.name)

        target_model = build(target)
        registry = cls(
            meta=target_model.params.copy(target_model.params.shared_names()),
            sources={s.name: build(s) for s in sources},
            target=target_model,
            target_name=target.name,
            optimizers={target.name: get_optimizer(config.optimizer, config.target_lr)},
        )
        for s in sources:
            registry.optimizers[s.name] = get_optimizer(
                config.optimizer, config.source_lr
            )
        registry.check()
        return registry

    def models(self) -> Dict[str, HalfOpenTransformer]:
        return {**self.sources, self.target_name: self.target}

    def check(self):
        """Raise unless all models agree with meta on the shared group."""
        expected = {name: self.meta[name].shape for name in self.meta}
        if any(self.meta.group(name) != SHARED for name in self.meta):
            raise RegistryError("the meta model holds a private parameter")
        for city, model in self.models().items():
            model.params.check_partition()
            shared = {
                name: model.params[name].shape
                for name in model.params.shared_names()
            }
            if shared != expected:
                raise RegistryError(f"shared group of '{city}' differs from meta")


def meta_clone(source: ParameterSet, meta: ParameterSet):
    """Overwrite the shared group of ``source`` with a value copy of ``meta``."""
    names = source.shared_names()
    if set(names) != set(meta):
        missing = sorted(set(names) ^ set(meta))
        raise RegistryError(f"shared names differ from meta: {missing}")
    for name in names:
        if source[name].shape != meta[name].shape:
            raise RegistryError(
                f"shape of '{name}' is {source[name].shape}, "
                f"meta has {meta[name].shape}"
            )
    for name in names:
        source[name].data[...] = meta[name].data


def meta_update(
    meta: ParameterSet,
    adapted_source,
    batches: Iterable[data.Batch],
    learning_rate: float,
) -> float:
    """
    First-order meta step: the gradient of the source model on its test
    batches, applied to the meta parameters with plain SGD.

    Gradients of private parameters are discarded.

    Returns
    -------
    float
        Mean test loss of the source model.
    """
    gradients, loss = compute_gradients(adapted_source, batches)
    for name in meta:
        if name not in gradients or adapted_source.params.group(name) != SHARED:
            raise RegistryError(f"meta parameter '{name}' is not shared by the source")
        if gradients[name].shape != meta[name].shape:
            raise RegistryError(f"shape of '{name}' differs between meta and source")
        meta[name].zero_grad()
        meta[name].accumulate(gradients[name])
    SGD(learning_rate).step(meta)
    return loss


@dataclass
class TransferResult:
    registry: CityModelRegistry
    trace: List[TraceRow]

    @property
    def target(self) -> HalfOpenTransformer:
        return self.registry.target


def _clone(city: str, model: HalfOpenTransformer, meta: ParameterSet, hook):
    before = (
        {name: model.params[name].data.copy() for name in model.params.private_names()}
        if hook is not None
        else {}
    )
    meta_clone(model.params, meta)
    if hook is not None:
        hook(city, before, model.params, meta)


def write_checkpoints(registry: CityModelRegistry, directory: str, metadata=None):
    """Write ``meta.tar``, ``source-<city>.tar`` and ``target.tar``."""
    os.makedirs(directory, exist_ok=True)
    utils.write_checkpoint(
        os.path.join(directory, "meta.tar"), registry.meta, metadata=metadata
    )
    for city, model in registry.sources.items():
        utils.write_checkpoint(
            os.path.join(directory, f"source-{city}.tar"),
            model.params,
            model.config,
            metadata,
        )
    utils.write_checkpoint(
        os.path.join(directory, "target.tar"),
        registry.target.params,
        registry.target.config,
        metadata,
    )


def run_transfer(
    registry: CityModelRegistry,
    datasets: Dict[str, data.CityDataset],
    config: TransferConfig,
    seed: int = 0,
    on_clone: Optional[CloneHook] = None,
    checkpoint_dir: Optional[str] = None,
) -> TransferResult:
    """
    Train the target with the shared group learned across source cities.

    Every meta epoch visits the sources in ``config.source_cities`` order
    (registry order if empty): clone meta, train on the train split, meta
    update on the test split. Then the target is cloned from meta and trained
    for ``target_epochs``.
    """
    order = list(config.source_cities) or list(registry.sources)
    for city in order + [registry.target_name]:
        if city not in datasets:
            raise ConfigError(f"no dataset for city '{city}'")
    unknown = [city for city in order if city not in registry.sources]
    if unknown:
        raise RegistryError(f"no model registered for {unknown}")
    registry.check()

    trace: List[TraceRow] = []
    target_data = datasets[registry.target_name]
    for e in range(config.meta_epochs):
        meta_epoch = e + 1
        for city in order:
            model = registry.sources[city]
            _clone(city, model, registry.meta, on_clone)
            losses = internal_update(
                model,
                datasets[city].train,
                registry.optimizers[city],
                config.source_epochs,
                batch_size=config.batch_size,
                seed=seed,
                city=city,
                epoch_offset=e * config.source_epochs,
            )
            trace.extend(
                TraceRow(meta_epoch, "source", city, i, loss)
                for i, loss in enumerate(losses, start=1)
            )
            batches = data.batch(
                datasets[city].test,
                config.batch_size,
                model.config.max_seq_len,
                bos_id=model.config.bos_id,
            )
            test_loss = meta_update(registry.meta, model, batches, config.meta_lr)
            logger.info("meta epoch %i %s test loss %0.4f", meta_epoch, city, test_loss)
            trace.append(TraceRow(meta_epoch, "meta", city, 1, test_loss))

        target = registry.target
        _clone(registry.target_name, target, registry.meta, on_clone)
        losses = internal_update(
            target,
            target_data.train,
            registry.optimizers[registry.target_name],
            config.target_epochs,
            batch_size=config.batch_size,
            seed=seed,
            city=registry.target_name,
            epoch_offset=e * config.target_epochs,
        )
        trace.extend(
            TraceRow(meta_epoch, "target", registry.target_name, i, loss)
            for i, loss in enumerate(losses, start=1)
        )
        if checkpoint_dir and config.checkpoint_every:
            if meta_epoch % config.checkpoint_every == 0:
                write_checkpoints(
                    registry,
                    os.path.join(checkpoint_dir, f"meta-epoch-{meta_epoch:03d}"),
                    {"meta_epoch": meta_epoch, "seed": seed},
                )
    return TransferResult(registry=registry, trace=trace)
