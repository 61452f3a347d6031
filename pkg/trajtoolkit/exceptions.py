"""Exceptions raised by trajtoolkit.

Built-in exception types are used where Python already has the category
(``ValueError`` for bad arguments, ``IndexError`` for out-of-range ids).
"""


class TrajToolkitError(Exception):
    """Base class of all trajtoolkit errors."""

    category = "error"


class DimensionError(TrajToolkitError):
    """Tensor shapes do not fit together."""

    category = "dimension"


class OptimizerStateError(TrajToolkitError):
    """An optimizer step was requested for a parameter without gradient."""

    category = "optimizer"


class ConfigError(TrajToolkitError):
    """A configuration value or file is invalid."""

    category = "config"


class RegistryError(TrajToolkitError):
    """Parameter sets of different city models do not line up."""

    category = "registry"


class IngestionError(TrajToolkitError):
    """Raw check-in data could not be turned into a city dataset."""

    category = "data"


class ProfileError(TrajToolkitError):
    """A location frequency profile is not strictly positive."""

    category = "profile"
