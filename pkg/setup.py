# Third party modules
from setuptools import setup

setup(
    install_requires=[
        "click",
        "h5py",
        "numpy",
        "PyYAML",
        "scipy",
    ],
)
