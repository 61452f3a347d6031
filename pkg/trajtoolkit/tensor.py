#!/usr/bin/env python

"""
Dense float64 tensors with reverse-mode automatic differentiation.

Every differentiable operation is a method of :class:`Tape`. The tape records
each operation together with its backward rule; :meth:`Tape.backward` walks the
records in exact reverse order and *adds* the resulting gradients into
``Tensor.grad``. Callers zero gradients between steps.

>>> tape = Tape()
>>> a = Tensor([[1.0, 2.0], [3.0, 4.0]], requires_grad=True)
>>> b = Tensor([[1.0], [1.0]])
>>> tape.matmul(a, b).data.tolist()
[[3.0], [7.0]]
"""

# Core Library modules
import logging
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple, Union

# Third party modules
import numpy as np
from scipy.special import logsumexp

# First party modules
from trajtoolkit.exceptions import DimensionError

logger = logging.getLogger(__name__)

ArrayLike = Union[np.ndarray, Sequence, float]
BackwardRule = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]

LAYER_NORM_EPSILON = 1e-5


class Tensor:
    """A dense float64 value which may carry an accumulated gradient."""

    def __init__(self, data: ArrayLike, requires_grad: bool = False):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def accumulate(self, grad: np.ndarray):
        """Add ``grad`` into the gradient slot."""
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += grad

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)


@dataclass
class Operation:
    name: str
    inputs: Tuple[Tensor, ...]
    output: Tensor
    backward: BackwardRule


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _swap_last(x: np.ndarray) -> np.ndarray:
    return np.swapaxes(x, -1, -2)


class Tape:
    """
    Ordered record of the operations of one forward pass.

    Parameters
    ----------
    enabled : bool
        If False nothing is recorded; use this for evaluation-only passes.
    """

    def __init__(self, enabled: bool = True):
        self.enabled = enabled
        self.operations: List[Operation] = []

    def __len__(self):
        return len(self.operations)

    def _record(
        self,
        name: str,
        inputs: Tuple[Tensor, ...],
        data: np.ndarray,
        backward: BackwardRule,
    ) -> Tensor:
        requires_grad = self.enabled and any(t.requires_grad for t in inputs)
        out = Tensor(data, requires_grad=requires_grad)
        if requires_grad:
            self.operations.append(Operation(name, inputs, out, backward))
        return out

    def backward(self, loss: Tensor, grad: Optional[np.ndarray] = None):
        """Propagate gradients from ``loss`` to every recorded input."""
        if grad is None:
            grad = np.ones_like(loss.data)
        loss.accumulate(grad)
        for op in reversed(self.operations):
            if op.output.grad is None:
                continue
            input_grads = op.backward(op.output.grad)
            for tensor, input_grad in zip(op.inputs, input_grads):
                if tensor.requires_grad and input_grad is not None:
                    tensor.accumulate(input_grad)

    # Elementwise operations
    def add(self, a: Tensor, b: Tensor) -> Tensor:
        """Elementwise sum; ``b`` may broadcast over leading axes."""
        try:
            data = a.data + b.data
        except ValueError as exc:
            raise DimensionError(f"cannot add shapes {a.shape} and {b.shape}") from exc

        def backward(g):
            return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

        return self._record("add", (a, b), data, backward)

    def mul(self, a: Tensor, b: Tensor) -> Tensor:
        """Elementwise product with broadcasting."""
        try:
            data = a.data * b.data
        except ValueError as exc:
            raise DimensionError(
                f"cannot multiply shapes {a.shape} and {b.shape}"
            ) from exc

        def backward(g):
            return (
                _unbroadcast(g * b.data, a.shape),
                _unbroadcast(g * a.data, b.shape),
            )

        return self._record("mul", (a, b), data, backward)

    def scale(self, a: Tensor, factor: float) -> Tensor:
        def backward(g):
            return (g * factor,)

        return self._record("scale", (a,), a.data * factor, backward)

    def relu(self, a: Tensor) -> Tensor:
        positive = a.data > 0

        def backward(g):
            return (g * positive,)

        return self._record("relu", (a,), np.where(positive, a.data, 0.0), backward)

    def sum(self, a: Tensor) -> Tensor:
        """Sum of all entries as a scalar tensor."""

        def backward(g):
            return (np.broadcast_to(g, a.shape).copy(),)

        return self._record("sum", (a,), np.array(a.data.sum()), backward)

    def dropout(
        self, a: Tensor, rate: float, rng: Optional[np.random.Generator]
    ) -> Tensor:
        """Inverted dropout; the identity when ``rng`` is None or rate is 0."""
        if rng is None or rate <= 0.0:
            return a
        keep = (rng.random(a.shape) >= rate) / (1.0 - rate)
        return self.mul(a, Tensor(keep))

    # Shape operations
    def reshape(self, a: Tensor, shape: Tuple[int, ...]) -> Tensor:
        def backward(g):
            return (g.reshape(a.shape),)

        return self._record("reshape", (a,), a.data.reshape(shape), backward)

    def transpose(self, a: Tensor, axes: Tuple[int, ...]) -> Tensor:
        inverse = tuple(np.argsort(axes))

        def backward(g):
            return (np.transpose(g, inverse),)

        return self._record("transpose", (a,), np.transpose(a.data, axes), backward)

    def gather(self, table: Tensor, ids: np.ndarray) -> Tensor:
        """
        Look up rows of a 2-d ``table``.

        The result has shape ``ids.shape + (table.shape[1],)``; gradients are
        scattered back into the visited rows only.
        """
        ids = np.asarray(ids, dtype=np.int64)
        if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
            raise IndexError(
                f"row id out of range [0, {table.shape[0]}): "
                f"min={ids.min()}, max={ids.max()}"
            )

        def backward(g):
            grad = np.zeros_like(table.data)
            np.add.at(grad, ids.reshape(-1), g.reshape(-1, table.shape[1]))
            return (grad,)

        return self._record("gather", (table,), table.data[ids], backward)

    # Linear algebra
    def matmul(self, a: Tensor, b: Tensor) -> Tensor:
        """
        Matrix product over the last two axes.

        ``a`` is ``(..., m, k)``; ``b`` is either ``(k, n)`` or has the same
        leading axes as ``a``.
        """
        if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
            raise DimensionError(f"cannot multiply shapes {a.shape} and {b.shape}")
        if b.ndim > 2 and b.shape[:-2] != a.shape[:-2]:
            raise DimensionError(f"cannot multiply shapes {a.shape} and {b.shape}")

        def backward(g):
            grad_a = g @ _swap_last(b.data)
            if b.ndim == 2:
                k, n = b.shape
                grad_b = a.data.reshape(-1, k).T @ g.reshape(-1, n)
            else:
                grad_b = _swap_last(a.data) @ g
            return grad_a, grad_b

        return self._record("matmul", (a, b), a.data @ b.data, backward)

    # Normalisation
    def softmax(
        self, a: Tensor, axis: int = -1, mask: Optional[np.ndarray] = None
    ) -> Tensor:
        """
        Max-stabilised softmax along ``axis``.

        Entries where ``mask`` is False receive exactly zero probability. Every
        slice needs at least one allowed entry.

        >>> Tape().softmax(Tensor([1000.0, 0.0])).data.round(6).tolist()
        [1.0, 0.0]
        """
        if mask is None:
            shifted = a.data - a.data.max(axis=axis, keepdims=True)
            exp = np.exp(shifted)
        else:
            allowed = np.broadcast_to(mask, a.shape)
            if not np.all(allowed.any(axis=axis)):
                raise ValueError("softmax mask leaves a slice without entries")
            masked = np.where(allowed, a.data, -np.inf)
            shifted = masked - masked.max(axis=axis, keepdims=True)
            exp = np.where(allowed, np.exp(np.where(allowed, shifted, 0.0)), 0.0)
        out = exp / exp.sum(axis=axis, keepdims=True)

        def backward(g):
            inner = (g * out).sum(axis=axis, keepdims=True)
            return (out * (g - inner),)

        return self._record("softmax", (a,), out, backward)

    def layer_norm(
        self,
        x: Tensor,
        gain: Tensor,
        bias: Tensor,
        epsilon: float = LAYER_NORM_EPSILON,
    ) -> Tensor:
        """Normalise the last axis to zero mean and unit variance."""
        width = x.shape[-1]
        mean = x.data.mean(axis=-1, keepdims=True)
        centered = x.data - mean
        inv_std = 1.0 / np.sqrt((centered ** 2).mean(axis=-1, keepdims=True) + epsilon)
        normed = centered * inv_std

        def backward(g):
            grad_normed = g * gain.data
            grad_x = (
                inv_std
                / width
                * (
                    width * grad_normed
                    - grad_normed.sum(axis=-1, keepdims=True)
                    - normed * (grad_normed * normed).sum(axis=-1, keepdims=True)
                )
            )
            grad_gain = (g * normed).reshape(-1, width).sum(axis=0)
            grad_bias = g.reshape(-1, width).sum(axis=0)
            return grad_x, grad_gain, grad_bias

        data = normed * gain.data + bias.data
        return self._record("layer_norm", (x, gain, bias), data, backward)

    # Loss
    def cross_entropy(
        self,
        logits: Tensor,
        targets: np.ndarray,
        mask: Optional[np.ndarray] = None,
    ) -> Tensor:
        """
        Mean negative log-likelihood over the positions where ``mask`` is set.

        ``logits`` has shape ``(..., N)``; ``targets`` and ``mask`` have the
        leading shape. Targets at masked-out positions are ignored.
        """
        targets = np.asarray(targets, dtype=np.int64)
        if mask is None:
            mask = np.ones(targets.shape, dtype=bool)
        mask = np.asarray(mask, dtype=bool)
        if targets.shape != logits.shape[:-1] or mask.shape != targets.shape:
            raise DimensionError(
                f"logits {logits.shape} do not match targets {targets.shape} "
                f"and mask {mask.shape}"
            )
        count = int(mask.sum())
        if count == 0:
            raise ValueError("cross_entropy needs at least one masked position")
        num_classes = logits.shape[-1]
        valid = targets[mask]
        if valid.min() < 0 or valid.max() >= num_classes:
            raise IndexError(f"target id out of range [0, {num_classes})")
        safe_targets = np.where(mask, targets, 0)
        log_probs = logits.data - logsumexp(logits.data, axis=-1, keepdims=True)
        picked = np.take_along_axis(log_probs, safe_targets[..., None], axis=-1)[..., 0]
        loss = -(picked * mask).sum() / count

        def backward(g):
            grad = np.exp(log_probs)
            np.put_along_axis(
                grad,
                safe_targets[..., None],
                np.take_along_axis(grad, safe_targets[..., None], axis=-1) - 1.0,
                axis=-1,
            )
            return (grad * (mask[..., None] / count) * g,)

        return self._record("cross_entropy", (logits,), np.array(loss), backward)


def numerical_gradient(
    loss_fn: Callable[[], float], tensor: Tensor, step: float = 1e-4
) -> np.ndarray:
    """
    Central finite-difference gradient of ``loss_fn`` with respect to ``tensor``.

    ``loss_fn`` must rebuild its computation from ``tensor.data`` on every call.
    """
    grad = np.zeros_like(tensor.data)
    flat = tensor.data.reshape(-1)
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + step
        upper = loss_fn()
        flat[i] = original - step
        lower = loss_fn()
        flat[i] = original
        grad.reshape(-1)[i] = (upper - lower) / (2 * step)
    return grad
