#!/usr/bin/env python

"""Utility functions that can be used in multiple scripts."""

# Core Library modules
import csv
import hashlib
import io
import logging
import os
import shutil
import tarfile
import tempfile
from typing import Any, Dict, Iterable, Optional, Sequence, Tuple

# Third party modules
import h5py
import numpy as np
import yaml

# First party modules
from trajtoolkit.exceptions import ConfigError
from trajtoolkit.model import GROUPS, ModelConfig, ParameterSet

logger = logging.getLogger(__name__)

MODEL_TYPE = "half-open-transformer"
MODEL_YML = "model.yml"
PARAMETERS_HDF5 = "parameters.hdf5"


def derive_seed(*keys: Any) -> int:
    """
    Derive a reproducible 31-bit seed from ``keys``.

    >>> derive_seed(0, "target", 3) == derive_seed(0, "target", 3)
    True
    >>> derive_seed(0, "a") == derive_seed(0, "b")
    False
    """
    digest = hashlib.sha256(repr(keys).encode("utf8")).digest()
    return int.from_bytes(digest[:4], "big") & 0x7FFFFFFF


def config_hash(config: Dict[str, Any]) -> str:
    """Hash of the canonical YAML dump of ``config``."""
    text = yaml.safe_dump(config, sort_keys=True, default_flow_style=False)
    return hashlib.sha256(text.encode("utf8")).hexdigest()


def file_sha256(path: str) -> str:
    sha = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 16), b""):
            sha.update(block)
    return sha.hexdigest()


def load_yaml(path: str) -> Any:
    if not os.path.isfile(path):
        raise ConfigError(f"File '{path}' does not exist.")
    with open(path, encoding="utf8") as f:
        return yaml.safe_load(f)


def dump_yaml(obj: Any, path: str):
    with open(path, "w", encoding="utf8") as f:
        yaml.safe_dump(obj, f, default_flow_style=False, sort_keys=True)


def write_csv(path: str, header: Sequence[str], rows: Iterable[Sequence[Any]]):
    """Write a comma separated file; floats are written with ``repr``."""
    with open(path, "w", newline="", encoding="utf8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow(
                [
                    repr(float(v)) if isinstance(v, (float, np.floating)) else v
                    for v in row
                ]
            )


def read_csv(path: str):
    with open(path, newline="", encoding="utf8") as f:
        return list(csv.DictReader(f))


def is_valid_model_file(model_file_path: str) -> bool:
    """Check if ``model_file_path`` can be used as checkpoint path."""
    if not model_file_path.endswith(".tar"):
        logger.error(f"'{model_file_path}' does not end with '.tar'.")
        return False
    return True


def _add_file(tar: tarfile.TarFile, path: str, arcname: str):
    info = tarfile.TarInfo(arcname)
    info.size = os.path.getsize(path)
    info.mtime = 0
    info.mode = 0o644
    with open(path, "rb") as f:
        tar.addfile(info, f)


def write_checkpoint(
    path: str,
    params: ParameterSet,
    config: Optional[ModelConfig] = None,
    metadata: Optional[Dict[str, Any]] = None,
):
    """
    Write ``params`` to the checkpoint archive ``path``.

    The archive contains ``model.yml`` (model config and a manifest with name,
    shape and shared/private group of every parameter) and
    ``parameters.hdf5`` (one float64 dataset per parameter).
    """
    if not is_valid_model_file(path):
        raise ConfigError(f"checkpoint path '{path}' must end with '.tar'")
    model_yml = {
        "type": MODEL_TYPE,
        "config": config.to_dict() if config is not None else None,
        "parameters": [
            {
                "name": name,
                "shape": list(params[name].shape),
                "group": params.group(name),
            }
            for name in params
        ],
        "metadata": metadata or {},
    }
    tarfolder = tempfile.mkdtemp()
    try:
        with h5py.File(os.path.join(tarfolder, PARAMETERS_HDF5), "w") as f:
            for name in params:
                f.create_dataset(name, data=params[name].data, track_times=False)
        dump_yaml(model_yml, os.path.join(tarfolder, MODEL_YML))
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        with tarfile.open(path, "w", format=tarfile.USTAR_FORMAT) as tar:
            for name in (MODEL_YML, PARAMETERS_HDF5):
                _add_file(tar, os.path.join(tarfolder, name), name)
    finally:
        shutil.rmtree(tarfolder)
    logger.debug("Wrote %i parameters to %s", len(params), path)


def read_checkpoint(
    path: str,
) -> Tuple[Optional[ModelConfig], ParameterSet, Dict[str, Any]]:
    """
    Read a checkpoint written by :func:`write_checkpoint`.

    Returns
    -------
    (config, params, metadata)
        ``config`` is None for partial parameter sets such as the meta model.
    """
    if not os.path.isfile(path):
        raise ConfigError(f"File '{path}' does not exist.")
    if not tarfile.is_tarfile(path):
        raise ConfigError(f"'{path}' is not a valid tar file.")
    with tarfile.open(path) as tar:
        filenames = tar.getnames()
        for required in (MODEL_YML, PARAMETERS_HDF5):
            if required not in filenames:
                raise ConfigError(f"'{path}' does not have a {required}.")
        model_yml = yaml.safe_load(tar.extractfile(MODEL_YML))
        hdf5_bytes = io.BytesIO(tar.extractfile(PARAMETERS_HDF5).read())
    if model_yml.get("type") != MODEL_TYPE:
        raise ConfigError(f"'{path}' is not a {MODEL_TYPE} checkpoint.")

    params = ParameterSet()
    with h5py.File(hdf5_bytes, "r") as f:
        for entry in model_yml["parameters"]:
            if entry["group"] not in GROUPS:
                raise ConfigError(f"unknown group '{entry['group']}' in '{path}'")
            value = f[entry["name"]][()]
            if list(value.shape) != list(entry["shape"]):
                raise ConfigError(f"shape of '{entry['name']}' disagrees with manifest")
            params.add(entry["name"], value, entry["group"])
    config = model_yml.get("config")
    return (
        ModelConfig(**config) if config is not None else None,
        params,
        model_yml.get("metadata") or {},
    )
