"""Kernel backend selection.

The compiled extension is used when it imports; otherwise the numpy
fallback. Set ``CTM_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _kernels_py

if os.environ.get("CTM_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
else:
    try:
        from . import _kernels_c as _impl
    except ImportError:
        _impl = _kernels_py

BACKEND = _impl.BACKEND

splitmix_bits = _impl.splitmix_bits
uniform = _impl.uniform
dropout_mask = _impl.dropout_mask
softmax_rows = _impl.softmax_rows
softmax_rows_backward = _impl.softmax_rows_backward
max_pool_rows = _impl.max_pool_rows
max_pool_rows_backward = _impl.max_pool_rows_backward
attend = _impl.attend
attend_backward = _impl.attend_backward


def available_backends():
    """Map of backend name to kernel module for every importable backend."""
    out = {"python": _kernels_py}
    try:
        from . import _kernels_c
    except ImportError:
        pass
    else:
        out["cython"] = _kernels_c
    return out
