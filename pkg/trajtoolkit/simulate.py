#!/usr/bin/env python

"""Generate trajectories from a trained model with post-hoc adjustment."""

# Core Library modules
import logging
import os
from dataclasses import asdict, dataclass
from typing import Iterable, List, Optional, Sequence, Tuple

# Third party modules
import numpy as np
from scipy.special import softmax

# First party modules
import trajtoolkit.data as data
import trajtoolkit.utils as utils
from trajtoolkit.exceptions import ConfigError, ProfileError

logger = logging.getLogger(__name__)

TAU_GRID = (0.001, 0.01, 0.1, 0.25, 0.5, 1.0)


@dataclass
class SimulationConfig:
    """
    Settings of one simulation run.

    ``num_trajectories`` and ``horizon`` may be left as None; they are then
    taken from the size and mean trajectory length of the real test split.
    """

    tau: float = 0.25
    num_trajectories: Optional[int] = None
    horizon: Optional[int] = None
    seed: int = 0
    adjust: bool = True
    batch_size: int = 256

    def __post_init__(self):
        if self.adjust and not self.tau > 0:
            raise ConfigError(f"tau must be positive, not {self.tau}")
        if self.num_trajectories is not None and self.num_trajectories < 1:
            raise ConfigError("num_trajectories must be at least 1")
        if self.horizon is not None and not 1 <= self.horizon <= data.HOURS_PER_DAY:
            raise ConfigError(f"horizon must be in [1, {data.HOURS_PER_DAY}]")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be at least 1")

    def resolve(self, reference: Sequence[data.Trajectory]) -> "SimulationConfig":
        """Fill missing size and horizon from the ``reference`` split."""
        if not reference and (self.num_trajectories is None or self.horizon is None):
            raise ValueError("an empty reference split cannot size the simulation")
        values = asdict(self)
        if self.num_trajectories is None:
            values["num_trajectories"] = len(reference)
        if self.horizon is None:
            mean_length = np.mean([len(t) for t in reference])
            values["horizon"] = int(np.clip(round(mean_length), 1, data.HOURS_PER_DAY))
        return SimulationConfig(**values)


def _check_profile(pi: np.ndarray) -> np.ndarray:
    pi = np.asarray(pi, dtype=np.float64)
    if pi.ndim != 1 or not np.all(pi > 0):
        raise ProfileError("the frequency profile must be strictly positive")
    return pi


def adjust(logits: np.ndarray, pi: np.ndarray, tau: float) -> np.ndarray:
    """
    Post-hoc adjusted next-location distribution ``softmax(p - tau * log pi)``.

    ``logits`` may carry leading batch dimensions.

    >>> adjust(np.zeros(2), np.array([0.8, 0.2]), 1.0).round(12).tolist()
    [0.2, 0.8]
    """
    pi = _check_profile(pi)
    if not tau > 0:
        raise ValueError(f"tau must be positive, not {tau}")
    logits = np.asarray(logits, dtype=np.float64)
    if logits.shape[-1] != len(pi):
        raise ValueError(f"{logits.shape[-1]} logits for {len(pi)} locations")
    return softmax(logits - tau * np.log(pi), axis=-1)


def _draw_rows(probabilities: np.ndarray, uniforms: np.ndarray) -> np.ndarray:
    """Inverse-CDF draw of one index per row."""
    cdf = np.cumsum(probabilities, axis=-1)
    picks = (cdf <= (uniforms * cdf[:, -1])[:, None]).sum(axis=-1)
    return np.minimum(picks, probabilities.shape[-1] - 1)


def next_distribution(
    model, prefixes: np.ndarray, pi: Optional[np.ndarray], tau: float, enabled=True
) -> np.ndarray:
    logits = model.next_distribution_logits(prefixes)
    if enabled:
        return adjust(logits, pi, tau)
    return softmax(logits, axis=-1)


def sample_next(
    model,
    prefix: Sequence[int],
    pi: Optional[np.ndarray],
    tau: float,
    rng: np.random.Generator,
    enabled: bool = True,
) -> int:
    """
    Draw the next location after ``prefix`` (token ids starting with BOS).

    With ``enabled=False`` the plain model distribution is used.
    """
    prefix = np.asarray(prefix, dtype=np.int64)
    if not 1 <= len(prefix) < model.config.max_tokens:
        raise ValueError(
            f"prefix length must be in [1, {model.config.max_tokens}), "
            f"not {len(prefix)}"
        )
    probabilities = next_distribution(model, prefix[None, :], pi, tau, enabled)
    return int(_draw_rows(probabilities, np.array([rng.random()]))[0])


def simulate(
    model,
    config: SimulationConfig,
    vocabulary: data.LocationVocabulary,
    profile: Optional[data.FrequencyProfile],
) -> List[data.Trajectory]:
    """
    Generate ``config.num_trajectories`` trajectories of ``config.horizon``
    hourly visits from scratch.

    Trajectory ``m`` gets its own generator seeded from ``(seed, m)`` and
    becomes user ``sim-m`` on day ``m``, so results do not depend on
    ``batch_size``.
    """
    if config.num_trajectories is None or config.horizon is None:
        raise ConfigError("resolve num_trajectories and horizon before simulating")
    num_locations = model.config.num_locations
    if len(vocabulary) != num_locations:
        raise ValueError(
            f"vocabulary has {len(vocabulary)} locations, model {num_locations}"
        )
    if config.horizon > model.config.max_seq_len:
        raise ConfigError(
            f"horizon {config.horizon} exceeds max_seq_len {model.config.max_seq_len}"
        )
    pi = None
    if config.adjust:
        if profile is None or len(profile) != num_locations:
            raise ProfileError("a profile over the model's locations is required")
        pi = profile.pi

    trajectories = []
    hours = np.arange(config.horizon)
    for start in range(0, config.num_trajectories, config.batch_size):
        indices = range(start, min(start + config.batch_size, config.num_trajectories))
        rngs = [
            np.random.default_rng(utils.derive_seed(config.seed, "simulate", m))
            for m in indices
        ]
        tokens = np.full((len(rngs), 1), model.config.bos_id, dtype=np.int64)
        for _ in range(config.horizon):
            probabilities = next_distribution(
                model, tokens, pi, config.tau, config.adjust
            )
            uniforms = np.array([rng.random() for rng in rngs])
            picks = _draw_rows(probabilities, uniforms)
            tokens = np.concatenate([tokens, picks[:, None]], axis=1)
        for m, row in zip(indices, tokens[:, 1:]):
            trajectories.append(
                data.Trajectory(
                    user=f"sim-{m:06d}",
                    slots=m * data.HOURS_PER_DAY + hours,
                    locations=row,
                )
            )
        logger.debug("Simulated %i of %i", len(trajectories), config.num_trajectories)
    logger.info(
        "Simulated %i trajectories of %i visits (tau=%s, adjust=%s)",
        len(trajectories),
        config.horizon,
        config.tau,
        config.adjust,
    )
    return trajectories


def write_simulation(
    directory: str,
    trajectories: Iterable[data.Trajectory],
    config: SimulationConfig,
    checkpoint: Optional[str] = None,
    extra: Optional[dict] = None,
) -> str:
    """
    Write ``simulated.tsv`` (split file format) and ``provenance.yml``.

    Returns
    -------
    str
        Path of the written corpus.
    """
    os.makedirs(directory, exist_ok=True)
    path = os.path.join(directory, "simulated.tsv")
    data.write_trajectories(path, trajectories)
    provenance = {
        "checkpoint": checkpoint,
        "checkpoint_sha256": utils.file_sha256(checkpoint) if checkpoint else None,
        "simulation": asdict(config),
    }
    provenance.update(extra or {})
    utils.dump_yaml(provenance, os.path.join(directory, "provenance.yml"))
    return path


def scaling_law_error(
    logits: np.ndarray,
    gamma: float,
    scale: float,
    tau: float,
    pairs: Optional[Iterable[Tuple[int, int]]] = None,
) -> float:
    """
    Largest relative deviation from the pairwise scaling law.

    For a profile ``pi_i = scale * i^-gamma`` (ranks ``i`` from 1), the
    adjusted distribution satisfies
    ``(y~_i / y~_j) = (y_i / y_j) * (i / j)^(tau * gamma)``.
    ``pairs`` are 0-based index pairs; default is all pairs.

    >>> scaling_law_error(np.zeros(3), 1.0, 1.0, 0.5, [(0, 0)])
    0.0
    """
    logits = np.asarray(logits, dtype=np.float64)
    ranks = np.arange(1, len(logits) + 1, dtype=np.float64)
    pi = scale * ranks ** -gamma
    pi = pi / pi.sum()
    plain = softmax(logits)
    adjusted = adjust(logits, pi, tau)
    if pairs is None:
        pairs = [(i, j) for i in range(len(logits)) for j in range(len(logits))]
    error = 0.0
    for i, j in pairs:
        expected = (plain[i] / plain[j]) * (ranks[i] / ranks[j]) ** (tau * gamma)
        error = max(error, abs((adjusted[i] / adjusted[j]) / expected - 1.0))
    return float(error)
