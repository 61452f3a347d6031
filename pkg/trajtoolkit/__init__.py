"""trajtoolkit trains trajectory generators for cities with few data.

   Shared attention parameters are learned across source cities and carried
   over to the target city. Trained models generate trajectories whose
   location distribution is corrected towards the long tail, and the
   simulated trajectories are compared to real ones with six metrics."""

# Core Library modules
from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("trajtoolkit")
except PackageNotFoundError:
    __version__ = "Please install this project with setup.py"
