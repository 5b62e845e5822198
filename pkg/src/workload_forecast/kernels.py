"""Kernel backend selection.

The compiled extension is used when it imports; otherwise the numpy twins
are used. Set ``WORKLOAD_FORECAST_PURE=1`` to force the fallback.
"""

import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if os.environ.get("WORKLOAD_FORECAST_PURE", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError:
        pass
    else:
        _impl = _compiled
        BACKEND = "cython"

average_ranks = _impl.average_ranks
signed_rank_counts = _impl.signed_rank_counts
adam_update = _impl.adam_update
gather_windows = _impl.gather_windows


def backends():
    """Return ``{name: module}`` for every importable backend."""
    out = {"python": _kernels_py}
    try:
        from . import _kernels
    except ImportError:
        pass
    else:
        out["cython"] = _kernels
    return out
