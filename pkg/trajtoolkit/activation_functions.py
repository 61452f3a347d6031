#!/usr/bin/env python

"""Position-wise nonlinearities used between projection and MLP layers."""

# Core Library modules
import inspect
import logging
import sys

# First party modules
from trajtoolkit.exceptions import ConfigError
from trajtoolkit.tensor import Tape, Tensor

logger = logging.getLogger(__name__)


def get_class(name, module):
    """Get the class by its name as a string.

    Parameters
    ----------
    name : string
        Name of the class
    module :
        Module where to look for classes
    """
    clsmembers = inspect.getmembers(module, inspect.isclass)
    for string_name, act_class in clsmembers:
        if string_name == name:
            return act_class
    logger.debug("Unknown class '%s'.", name)
    return None


def get_activation_function(function_name):
    """Get an activation function object by its class name.

    Parameters
    ----------
    function_name : string
        Name of the activation function.

    Examples
    --------
    >>> get_activation_function('ReLU')
    ReLU
    """
    act_class = get_class(name=function_name, module=sys.modules[__name__])
    if act_class is None or act_class in (Tape, Tensor, ConfigError):
        raise ConfigError(f"unknown activation function '{function_name}'")
    return act_class()


# Only activation function classes follow
# Each activation function implements __str__, __repr__ and
# __call__(tape, x)
class ReLU:

    """The rectifier :math:`f(x) = \\max(0, x)`."""

    def __repr__(self):
        return "ReLU"

    def __str__(self):
        return "ReLU"

    def __call__(self, tape: Tape, x: Tensor) -> Tensor:
        return tape.relu(x)


class Identity:

    """The identity :math:`f(x) = x`."""

    def __repr__(self):
        return "Identity"

    def __str__(self):
        return "Identity"

    def __call__(self, tape: Tape, x: Tensor) -> Tensor:
        return x
