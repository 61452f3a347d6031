#!/usr/bin/env python

"""Gradient descent optimizers working on named tensors."""

# Core Library modules
import logging
from typing import Dict, Mapping

# Third party modules
import numpy as np

# First party modules
from trajtoolkit.exceptions import ConfigError, OptimizerStateError
from trajtoolkit.tensor import Tensor

logger = logging.getLogger(__name__)


class Optimizer:
    """Base class; subclasses implement :meth:`update`."""

    kind = "base"

    def __init__(self, learning_rate: float):
        if learning_rate < 0:
            raise ConfigError(f"learning rate must not be negative: {learning_rate}")
        self.learning_rate = learning_rate
        self.step_count = 0

    def __repr__(self):
        return f"{type(self).__name__}(learning_rate={self.learning_rate})"

    def step(self, params: Mapping[str, Tensor]):
        """Apply one update to every tensor in ``params`` and zero gradients."""
        missing = [name for name, tensor in params.items() if tensor.grad is None]
        if missing:
            raise OptimizerStateError(
                f"no gradient accumulated for {', '.join(sorted(missing))}"
            )
        self.step_count += 1
        for name, tensor in params.items():
            tensor.data -= self.update(name, tensor.grad)
            tensor.zero_grad()

    def update(self, name: str, grad: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class SGD(Optimizer):
    """Plain gradient step :math:`\\theta \\leftarrow \\theta - lr \\cdot g`."""

    kind = "sgd"

    def update(self, name, grad):
        return self.learning_rate * grad


class Adam(Optimizer):
    """Adam with bias-corrected first and second moments, keyed by name."""

    kind = "adam"

    def __init__(
        self,
        learning_rate: float,
        beta1: float = 0.9,
        beta2: float = 0.999,
        epsilon: float = 1e-8,
    ):
        super().__init__(learning_rate)
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.first_moment: Dict[str, np.ndarray] = {}
        self.second_moment: Dict[str, np.ndarray] = {}

    def update(self, name, grad):
        m = self.first_moment.get(name)
        v = self.second_moment.get(name)
        if m is None or m.shape != grad.shape:
            m = np.zeros_like(grad)
            v = np.zeros_like(grad)
        m = self.beta1 * m + (1 - self.beta1) * grad
        v = self.beta2 * v + (1 - self.beta2) * grad ** 2
        self.first_moment[name] = m
        self.second_moment[name] = v
        m_hat = m / (1 - self.beta1 ** self.step_count)
        v_hat = v / (1 - self.beta2 ** self.step_count)
        return self.learning_rate * m_hat / (np.sqrt(v_hat) + self.epsilon)


OPTIMIZERS = {SGD.kind: SGD, Adam.kind: Adam}


def get_optimizer(kind: str, learning_rate: float) -> Optimizer:
    """
    Create an optimizer by its kind.

    >>> get_optimizer("sgd", 0.1)
    SGD(learning_rate=0.1)
    """
    if kind not in OPTIMIZERS:
        raise ConfigError(
            f"unknown optimizer '{kind}', use one of {sorted(OPTIMIZERS)}"
        )
    return OPTIMIZERS[kind](learning_rate)


def optimizer_step(optimizer: Optimizer, params: Mapping[str, Tensor]):
    """Apply ``optimizer`` to ``params`` (a ParameterSet or any name mapping)."""
    optimizer.step(params)
