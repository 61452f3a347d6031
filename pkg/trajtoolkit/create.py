#!/usr/bin/env python

"""Create and initialise the parameters of a Half-open Transformer."""

# Core Library modules
import logging
from typing import List, Tuple

# Third party modules
import numpy as np

# First party modules
from trajtoolkit.model import PRIVATE, SHARED, ModelConfig, ParameterSet

logger = logging.getLogger(__name__)

# Name fragments of the parameters which city models share.
SHARED_FRAGMENTS = (".proj_shared.", ".attention.w_q", ".attention.w_k")


def parameter_group(name: str, half_open: bool = True) -> str:
    """
    Decide whether the parameter ``name`` is shared or private.

    Without the half-open split everything but the location embedding is
    shared; the embedding depends on the city's vocabulary.

    >>> parameter_group("layers.0.attention.w_q")
    'shared'
    >>> parameter_group("layers.0.attention.w_v")
    'private'
    >>> parameter_group("layers.0.attention.w_v", half_open=False)
    'shared'
    """
    if not half_open:
        return PRIVATE if name == "embedding" else SHARED
    if any(fragment in name for fragment in SHARED_FRAGMENTS):
        return SHARED
    return PRIVATE


def gaussian_weight_init(
    rng: np.random.Generator, shape: Tuple[int, ...], std: float
) -> np.ndarray:
    """Draw a weight matrix from :math:`\\mathcal{N}(0, std^2)`."""
    return rng.normal(0.0, std, size=shape)


def create_layer_parameters(
    config: ModelConfig, layer: int, rng: np.random.Generator
) -> List[Tuple[str, np.ndarray]]:
    """
    Create the parameters of one Transformer layer.

    Returns
    -------
    parameters : List[Tuple[str, np.ndarray]]
        ``(name, value)`` pairs in a fixed order.
    """
    d = config.hidden_dim
    std = config.init_std
    prefix = f"layers.{layer}"
    parameters = []
    for side in ("proj_private", "proj_shared"):
        for j in range(config.proj_layers):
            if config.proj_layers == 1:
                weight = np.eye(d)
            else:
                weight = gaussian_weight_init(rng, (d, d), std)
            parameters.append((f"{prefix}.{side}.{j}.weight", weight))
            parameters.append((f"{prefix}.{side}.{j}.bias", np.zeros(d)))
    for matrix in ("w_q", "w_k", "w_v", "w_o"):
        parameters.append(
            (f"{prefix}.attention.{matrix}", gaussian_weight_init(rng, (d, d), std))
        )
    inner = config.mlp_ratio * d
    parameters += [
        (f"{prefix}.norm1.gain", np.ones(d)),
        (f"{prefix}.norm1.bias", np.zeros(d)),
        (f"{prefix}.mlp.0.weight", gaussian_weight_init(rng, (d, inner), std)),
        (f"{prefix}.mlp.0.bias", np.zeros(inner)),
        (f"{prefix}.mlp.1.weight", gaussian_weight_init(rng, (inner, d), std)),
        (f"{prefix}.mlp.1.bias", np.zeros(d)),
        (f"{prefix}.norm2.gain", np.ones(d)),
        (f"{prefix}.norm2.bias", np.zeros(d)),
    ]
    return parameters


def create_parameters(config: ModelConfig, rng: np.random.Generator) -> ParameterSet:
    """
    Create the complete parameter set of a model described by ``config``.

    The embedding table has one extra row for the begin-of-sequence token and
    doubles as the output projection.
    """
    d = config.hidden_dim
    std = config.init_std
    parameters = [
        ("embedding", gaussian_weight_init(rng, (config.vocab_size, d), std)),
        ("positional", gaussian_weight_init(rng, (config.max_tokens, d), std)),
    ]
    for layer in range(config.num_layers):
        parameters += create_layer_parameters(config, layer, rng)

    params = ParameterSet()
    for name, value in parameters:
        params.add(name, value, parameter_group(name, config.half_open))
    logger.debug(
        "Created %i parameters (%i shared) for N=%i",
        len(params),
        len(params.shared_names()),
        config.num_locations,
    )
    return params
