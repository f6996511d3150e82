"""Hot numerical kernels with a compiled backend and a pure-Python fallback.

The Cython extension is used when it has been built; otherwise, or when
``NOMA_WF_PURE_PYTHON=1`` is set, the pure-Python module is loaded.
"""

import os

from . import _pykernels as pure

if os.environ.get("NOMA_WF_PURE_PYTHON", "") not in ("", "0"):
    _impl = pure
    BACKEND = "python"
else:
    try:
        from . import _ckernels as _impl
        BACKEND = "cython"
    except ImportError:
        _impl = pure
        BACKEND = "python"

cluster_constants = _impl.cluster_constants
waterfill_bisect = _impl.waterfill_bisect
greedy_assign = _impl.greedy_assign


def compiled():
    """Return the compiled kernel module, or ``None`` if it is not built."""
    try:
        from . import _ckernels
    except ImportError:
        return None
    return _ckernels


__all__ = ["BACKEND", "cluster_constants", "waterfill_bisect", "greedy_assign", "pure", "compiled"]
