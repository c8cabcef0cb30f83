"""Backend dispatch for the hot kernels.

The numba backend is used when available. Set EMBRYO_ALIGN_NO_NUMBA=1 to
force the pure numpy fallback; both produce bit-identical results.
"""

from __future__ import annotations

import os

if os.environ.get("EMBRYO_ALIGN_NO_NUMBA", "") == "1":
    from . import _kernels_numpy as _impl
else:
    try:
        from . import _kernels_numba as _impl
    except ImportError:
        from . import _kernels_numpy as _impl

BACKEND = _impl.BACKEND
set_threads = _impl.set_threads
affine_trilinear = _impl.affine_trilinear
affine_nearest = _impl.affine_nearest
best_split = _impl.best_split
forest_predict = _impl.forest_predict
