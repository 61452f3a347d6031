#!/usr/bin/env python

"""Train a city model on its own trajectories (the Internal Update)."""


# Core Library modules
import logging
import math
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

# Third party modules
import numpy as np

# First party modules
import trajtoolkit.data as data
import trajtoolkit.utils as utils
from trajtoolkit.model import HalfOpenTransformer, ModelConfig
from trajtoolkit.optimizers import Optimizer, get_optimizer
from trajtoolkit.tensor import Tape

logger = logging.getLogger(__name__)


@dataclass
class TraceRow:
    """One line of a training trace."""

    meta_epoch: int
    phase: str
    city: str
    epoch: int
    mean_loss: float

    HEADER = ("meta_epoch", "phase", "city", "epoch", "mean_loss")

    def as_tuple(self):
        return (self.meta_epoch, self.phase, self.city, self.epoch, self.mean_loss)


def write_trace(path: str, rows: Iterable[TraceRow]):
    utils.write_csv(path, TraceRow.HEADER, (row.as_tuple() for row in rows))


def init_model(config: ModelConfig, seed: int, city: str) -> HalfOpenTransformer:
    """Initialise the model of ``city``; the same seed gives the same weights."""
    rng = np.random.default_rng(utils.derive_seed(seed, "init", city))
    return HalfOpenTransformer.create(config, rng)


def internal_update(
    model: HalfOpenTransformer,
    trajectories: Sequence[data.Trajectory],
    optimizer: Optimizer,
    epochs: int,
    batch_size: int = 32,
    seed: int = 0,
    city: str = "city",
    epoch_offset: int = 0,
) -> List[float]:
    """
    Minibatch gradient descent on the internal loss over all parameters.

    Shuffling and dropout of epoch ``epoch_offset + e`` are seeded from
    ``(seed, city, epoch_offset + e)``, so a run can be continued in pieces
    with bit-identical results.

    Returns
    -------
    List[float]
        Mean training loss of every epoch.
    """
    if not trajectories:
        raise ValueError(f"no training trajectories for '{city}'")
    if epochs < 1:
        raise ValueError(f"epochs must be at least 1, not {epochs}")
    config = model.config
    trace = []
    for e in range(epoch_offset, epoch_offset + epochs):
        dropout_rng = np.random.default_rng(utils.derive_seed(seed, city, e, "dropout"))
        batches = data.batch(
            trajectories,
            batch_size,
            config.max_seq_len,
            seed=utils.derive_seed(seed, city, e),
            bos_id=config.bos_id,
        )
        losses = []
        for batch in batches:
            tape = Tape()
            loss = model.internal_loss(tape, batch, rng=dropout_rng)
            tape.backward(loss)
            optimizer.step(model.params)
            losses.append(loss.item())
        mean_loss = float(np.mean(losses))
        if not math.isfinite(mean_loss):
            raise FloatingPointError(f"training of '{city}' diverged in epoch {e + 1}")
        logger.info("%s epoch %i loss %0.4f", city, e + 1, mean_loss)
        trace.append(mean_loss)
    return trace


def compute_gradients(
    model, batches: Iterable[data.Batch]
) -> Tuple[Dict[str, np.ndarray], float]:
    """
    Gradient of the internal loss averaged over ``batches`` (no dropout).

    ``model`` is anything with ``params`` and ``internal_loss(tape, batch)``.

    Returns
    -------
    (gradients, mean_loss)
    """
    model.params.zero_grad()
    losses = []
    for batch in batches:
        tape = Tape()
        loss = model.internal_loss(tape, batch)
        tape.backward(loss)
        losses.append(loss.item())
    if not losses:
        raise ValueError("cannot compute a gradient without batches")
    gradients = {
        name: tensor.grad / len(losses) for name, tensor in model.params.items()
    }
    model.params.zero_grad()
    return gradients, float(np.mean(losses))


def train_single_city(
    dataset: data.CityDataset,
    config: ModelConfig,
    epochs: int = 250,
    learning_rate: float = 1e-3,
    batch_size: int = 32,
    seed: int = 0,
    optimizer_kind: str = "adam",
) -> Tuple[HalfOpenTransformer, List[TraceRow]]:
    """Train one city model from scratch on its train split."""
    if epochs < 1:
        raise ValueError(f"epochs must be at least 1, not {epochs}")
    model = init_model(config, seed, dataset.name)
    optimizer = get_optimizer(optimizer_kind, learning_rate)
    losses = internal_update(
        model,
        dataset.train,
        optimizer,
        epochs,
        batch_size=batch_size,
        seed=seed,
        city=dataset.name,
    )
    trace = [
        TraceRow(1, "target", dataset.name, epoch, loss)
        for epoch, loss in enumerate(losses, start=1)
    ]
    return model, trace


def main(
    dataset: data.CityDataset,
    config: ModelConfig,
    model_output_file: str,
    trace_file: str,
    epochs: int,
    learning_rate: float,
    batch_size: int,
    seed: int,
    metadata: Optional[Dict] = None,
) -> HalfOpenTransformer:
    """Train on ``dataset`` and write the checkpoint and trace."""
    model, trace = train_single_city(
        dataset, config, epochs, learning_rate, batch_size, seed
    )
    utils.write_checkpoint(model_output_file, model.params, config, metadata)
    write_trace(trace_file, trace)
    logger.info(f"Saved model to {model_output_file}")
    return model
