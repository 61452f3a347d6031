#!/usr/bin/env python

"""
The Half-open Transformer.

Location embeddings, the Value path, output projections, layer norms and MLPs
are private to a city. The Query/Key path and the shared input projection are
tagged shared, so a meta model can carry them across cities whose location
vocabularies have nothing in common.
"""

# Core Library modules
import logging
from collections.abc import Mapping
from dataclasses import asdict, dataclass
from typing import Any, Dict, Iterator, List, Optional, Tuple

# Third party modules
import numpy as np

# First party modules
from trajtoolkit.activation_functions import get_activation_function
from trajtoolkit.exceptions import ConfigError, RegistryError
from trajtoolkit.tensor import Tape, Tensor

logger = logging.getLogger(__name__)

SHARED = "shared"
PRIVATE = "private"
GROUPS = (SHARED, PRIVATE)


@dataclass
class ModelConfig:
    """
    Architecture of one city model.

    ``max_seq_len`` counts visits; the token sequence additionally starts with
    the begin-of-sequence token whose id is ``num_locations``.
    """

    num_locations: int
    hidden_dim: int = 96
    num_heads: int = 4
    num_layers: int = 2
    proj_layers: int = 1
    max_seq_len: int = 24
    dropout_rate: float = 0.1
    mlp_ratio: int = 4
    activation: str = "ReLU"
    half_open: bool = True
    init_std: float = 0.02

    def __post_init__(self):
        for field in ("num_locations", "hidden_dim", "num_heads", "num_layers"):
            if int(getattr(self, field)) < 1:
                raise ConfigError(f"{field} must be a positive integer")
        if self.max_seq_len < 1 or self.mlp_ratio < 1:
            raise ConfigError("max_seq_len and mlp_ratio must be positive")
        if self.hidden_dim % self.num_heads != 0:
            raise ConfigError(
                f"hidden_dim={self.hidden_dim} is not divisible by "
                f"num_heads={self.num_heads}"
            )
        if self.proj_layers not in (1, 2, 3):
            raise ConfigError(f"proj_layers must be 1, 2 or 3, not {self.proj_layers}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError(f"dropout_rate must be in [0, 1): {self.dropout_rate}")
        get_activation_function(self.activation)

    @property
    def bos_id(self) -> int:
        return self.num_locations

    @property
    def vocab_size(self) -> int:
        return self.num_locations + 1

    @property
    def head_dim(self) -> int:
        return self.hidden_dim // self.num_heads

    @property
    def max_tokens(self) -> int:
        return self.max_seq_len + 1

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


class ParameterSet(Mapping):
    """
    Named parameter tensors, each tagged ``shared`` or ``private``.

    >>> params = ParameterSet()
    >>> params.add("w", np.zeros(2), SHARED)
    >>> params.shared_names(), params.private_names()
    (['w'], [])
    """

    def __init__(self):
        self._tensors: Dict[str, Tensor] = {}
        self._groups: Dict[str, str] = {}

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self._tensors)

    def __len__(self) -> int:
        return len(self._tensors)

    def __repr__(self):
        return (
            f"ParameterSet({len(self.shared_names())} shared, "
            f"{len(self.private_names())} private)"
        )

    def add(self, name: str, value: np.ndarray, group: str):
        if group not in GROUPS:
            raise ValueError(f"group must be one of {GROUPS}, not '{group}'")
        if name in self._tensors:
            raise ValueError(f"parameter '{name}' already exists")
        self._tensors[name] = Tensor(value, requires_grad=True)
        self._groups[name] = group

    def group(self, name: str) -> str:
        return self._groups[name]

    def shared_names(self) -> List[str]:
        return [name for name in self._tensors if self._groups[name] == SHARED]

    def private_names(self) -> List[str]:
        return [name for name in self._tensors if self._groups[name] == PRIVATE]

    def subset(self, names) -> Dict[str, Tensor]:
        return {name: self._tensors[name] for name in names}

    def zero_grad(self):
        for tensor in self._tensors.values():
            tensor.zero_grad()

    def copy(self, names: Optional[List[str]] = None) -> "ParameterSet":
        """Deep value copy; gradients are not copied."""
        result = ParameterSet()
        for name in names if names is not None else list(self._tensors):
            result.add(name, self._tensors[name].data.copy(), self._groups[name])
        return result

    def state(self) -> Dict[str, np.ndarray]:
        return {name: tensor.data.copy() for name, tensor in self._tensors.items()}

    def check_partition(self):
        """Raise unless every parameter is in exactly one of the two groups."""
        shared = set(self.shared_names())
        private = set(self.private_names())
        if shared & private or shared | private != set(self._tensors):
            raise RegistryError("shared and private groups do not partition the set")


class HalfOpenTransformer:
    """
    Causal Transformer over location ids with a shared Query/Key path.

    Every method takes the :class:`Tape` to record on. Dropout is active only
    when a generator ``rng`` is given, which is how training passes are told
    apart from evaluation passes.
    """

    def __init__(self, config: ModelConfig, params: ParameterSet):
        self.config = config
        self.params = params
        self.activation = get_activation_function(config.activation)

    def __repr__(self):
        return (
            f"HalfOpenTransformer(N={self.config.num_locations}, "
            f"d={self.config.hidden_dim}, L={self.config.num_layers})"
        )

    @classmethod
    def create(cls, config: ModelConfig, rng: np.random.Generator):
        """Create a freshly initialised model."""
        # First party modules
        from trajtoolkit.create import create_parameters

        return cls(config, create_parameters(config, rng))

    def embed(self, tape: Tape, ids: np.ndarray) -> Tensor:
        """Location embedding plus learned positional embedding."""
        ids = np.asarray(ids, dtype=np.int64)
        length = ids.shape[-1]
        if length > self.config.max_tokens:
            raise ConfigError(
                f"sequence of {length} tokens exceeds {self.config.max_tokens}"
            )
        if ids.size and ids.max() >= self.config.vocab_size:
            raise IndexError(
                f"location id {ids.max()} out of range [0, {self.config.vocab_size})"
            )
        h = tape.gather(self.params["embedding"], ids)
        positions = tape.gather(self.params["positional"], np.arange(length))
        return tape.add(h, positions)

    def _linear(self, tape: Tape, x: Tensor, prefix: str) -> Tensor:
        y = tape.matmul(x, self.params[f"{prefix}.weight"])
        return tape.add(y, self.params[f"{prefix}.bias"])

    def _projection(self, tape: Tape, h: Tensor, prefix: str) -> Tensor:
        for j in range(self.config.proj_layers):
            if j > 0:
                h = self.activation(tape, h)
            h = self._linear(tape, h, f"{prefix}.{j}")
        return h

    def project(self, tape: Tape, h: Tensor, layer: int) -> Tuple[Tensor, Tensor]:
        """Map ``h`` into its private and shared representations."""
        prefix = f"layers.{layer}"
        h_private = self._projection(tape, h, f"{prefix}.proj_private")
        h_shared = self._projection(tape, h, f"{prefix}.proj_shared")
        return h_private, h_shared

    def _split_heads(self, tape: Tape, x: Tensor) -> Tensor:
        batch, length, _ = x.shape
        heads, head_dim = self.config.num_heads, self.config.head_dim
        x = tape.reshape(x, (batch, length, heads, head_dim))
        return tape.transpose(x, (0, 2, 1, 3))

    def causal_attention(
        self,
        tape: Tape,
        h_shared: Tensor,
        h_private: Tensor,
        layer: int,
        key_mask: Optional[np.ndarray] = None,
        rng: Optional[np.random.Generator] = None,
    ) -> Tuple[Tensor, np.ndarray]:
        """
        Multi-head causal attention; Query/Key from ``h_shared``, Value from
        ``h_private``.

        Accepts ``(T, d)`` or ``(B, T, d)`` inputs. Returns the output ``z``
        and the attention weights of shape ``(B, heads, T, T)``.
        """
        unbatched = h_shared.ndim == 2
        if unbatched:
            h_shared = tape.reshape(h_shared, (1,) + h_shared.shape)
            h_private = tape.reshape(h_private, (1,) + h_private.shape)
        batch, length, width = h_shared.shape
        prefix = f"layers.{layer}.attention"

        q = self._split_heads(tape, tape.matmul(h_shared, self.params[f"{prefix}.w_q"]))
        k = self._split_heads(tape, tape.matmul(h_shared, self.params[f"{prefix}.w_k"]))
        v = self._split_heads(
            tape, tape.matmul(h_private, self.params[f"{prefix}.w_v"])
        )
        scores = tape.scale(
            tape.matmul(q, tape.transpose(k, (0, 1, 3, 2))),
            1.0 / np.sqrt(self.config.head_dim),
        )
        allowed = np.tril(np.ones((length, length), dtype=bool))[None, None]
        if key_mask is not None:
            allowed = allowed & np.asarray(key_mask, dtype=bool)[:, None, None, :]
        weights = tape.softmax(scores, axis=-1, mask=allowed)
        attended = tape.matmul(tape.dropout(weights, self.config.dropout_rate, rng), v)
        attended = tape.reshape(
            tape.transpose(attended, (0, 2, 1, 3)), (batch, length, width)
        )
        z = tape.matmul(attended, self.params[f"{prefix}.w_o"])
        if unbatched:
            z = tape.reshape(z, (length, width))
        return z, weights.data

    def _mlp(self, tape: Tape, x: Tensor, layer: int) -> Tensor:
        prefix = f"layers.{layer}.mlp"
        hidden = self.activation(tape, self._linear(tape, x, f"{prefix}.0"))
        return self._linear(tape, hidden, f"{prefix}.1")

    def _layer_norm(self, tape: Tape, x: Tensor, prefix: str) -> Tensor:
        return tape.layer_norm(
            x, self.params[f"{prefix}.gain"], self.params[f"{prefix}.bias"]
        )

    def forward(
        self,
        tape: Tape,
        ids: np.ndarray,
        mask: Optional[np.ndarray] = None,
        rng: Optional[np.random.Generator] = None,
        attention: Optional[List[np.ndarray]] = None,
    ) -> Tensor:
        """
        Logits ``(B, T, N)``; position ``t`` scores the location at ``t + 1``.

        If a list is passed as ``attention``, the weights of every layer are
        appended to it.
        """
        ids = np.asarray(ids, dtype=np.int64)
        if ids.ndim != 2:
            raise ValueError(f"ids must have shape (batch, time), not {ids.shape}")
        dropout = self.config.dropout_rate
        h = self.embed(tape, ids)
        for layer in range(self.config.num_layers):
            h_private, h_shared = self.project(tape, h, layer)
            z, weights = self.causal_attention(
                tape, h_shared, h_private, layer, key_mask=mask, rng=rng
            )
            if attention is not None:
                attention.append(weights)
            h_bar = self._layer_norm(tape, tape.add(h, z), f"layers.{layer}.norm1")
            mlp_out = tape.dropout(self._mlp(tape, h_bar, layer), dropout, rng)
            h = self._layer_norm(tape, mlp_out, f"layers.{layer}.norm2")
        locations = tape.gather(
            self.params["embedding"], np.arange(self.config.num_locations)
        )
        return tape.matmul(h, tape.transpose(locations, (1, 0)))

    def internal_loss(
        self,
        tape: Tape,
        batch,
        rng: Optional[np.random.Generator] = None,
    ) -> Tensor:
        """
        Next-location cross entropy of a :class:`trajtoolkit.data.Batch`.

        Positions ``1..T-1`` are predicted from ``0..T-2``; padding is skipped.
        Batches built with ``bos_id`` start with the begin-of-sequence token, so
        the first visit is a target too: a one-visit trajectory contributes the
        single prediction BOS -> visit. Without the token it contributes nothing.
        """
        ids = np.asarray(batch.ids, dtype=np.int64)
        mask = np.asarray(batch.mask, dtype=bool)
        if ids.size == 0:
            raise ValueError("internal_loss needs a non-empty batch")
        targets = np.zeros_like(ids)
        targets[:, :-1] = ids[:, 1:]
        target_mask = np.zeros_like(mask)
        target_mask[:, :-1] = mask[:, 1:] & mask[:, :-1]
        if not target_mask.any():
            raise ValueError("batch has no position to predict")
        logits = self.forward(tape, ids, mask, rng=rng)
        return tape.cross_entropy(logits, targets, target_mask)

    def next_distribution_logits(self, prefixes: np.ndarray) -> np.ndarray:
        """Logits ``(B, N)`` at the last position of equally long prefixes."""
        logits = self.forward(Tape(enabled=False), np.atleast_2d(prefixes))
        return logits.data[:, -1, :]
