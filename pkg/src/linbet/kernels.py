"""Backend selection for the hot kernels.

The compiled extension is used when it imports; otherwise the numpy versions.
Set ``LINBET_PURE_PYTHON=1`` to force the numpy path.
"""
import os

from . import _kernels_py

BACKEND = "python"
truncated_projection = _kernels_py.truncated_projection
lower_median_distances = _kernels_py.lower_median_distances

if os.environ.get("LINBET_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError:
        pass
    else:
        BACKEND = "compiled"
        truncated_projection = _compiled.truncated_projection
        lower_median_distances = _compiled.lower_median_distances

__all__ = ["BACKEND", "truncated_projection", "lower_median_distances"]
