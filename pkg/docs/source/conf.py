"""Sphinx configuration of the trajtoolkit documentation."""

# Core Library modules
import os
import sys

sys.path.insert(0, os.path.abspath(os.path.join("..", "..")))

# First party modules
import trajtoolkit  # noqa: E402

project = "trajtoolkit"
copyright = "2022, trajtoolkit developers"
version = ".".join(trajtoolkit.__version__.split(".")[:2])
release = trajtoolkit.__version__

extensions = [
    "sphinx.ext.autodoc",
    "sphinx.ext.doctest",
    "sphinx.ext.mathjax",
    "sphinx.ext.viewcode",
]
autodoc_member_order = "bysource"

master_doc = "index"
source_suffix = ".rst"
exclude_patterns = []
pygments_style = "sphinx"

html_theme = "alabaster"
htmlhelp_basename = "trajtoolkitdoc"
