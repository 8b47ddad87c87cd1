"""Kernel selection.

The compiled extension is used when it imports; otherwise, or when the
environment variable ``SHEPPEXT_PURE_PYTHON`` is set to a non-empty value
other than ``0``, the numpy implementation is used.  ``BACKEND`` names the
active one.
"""

import os

from . import _kernels_py

_force_py = os.environ.get("SHEPPEXT_PURE_PYTHON", "") not in ("", "0")

try:
    if _force_py:
        raise ImportError("pure-python backend forced")
    from . import _ckernels as _impl

    BACKEND = "cython"
except ImportError:
    _impl = _kernels_py
    BACKEND = "python"

grid_max_batch = _impl.grid_max_batch
pickands_stats = _impl.pickands_stats
