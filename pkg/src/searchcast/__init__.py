"""Multi-horizon death forecasting from surveillance counts and search-frequency panels."""
import os as _os
import warnings as _warnings

# Prefer thread layers that need no TBB; numba otherwise warns about old TBB builds.
_os.environ.setdefault("NUMBA_THREADING_LAYER_PRIORITY", "omp workqueue tbb")
_warnings.filterwarnings("ignore", message=".*TBB.*")

__version__ = "0.1.0"
