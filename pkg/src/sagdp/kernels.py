"""Backend selection for the simulation kernels.

The compiled Cython extension is preferred when it imported cleanly; setting
``SAGDP_PURE_PY=1`` forces the numpy fallback.  ``BACKEND`` names the active
implementation ("cython" or "python").
"""

from __future__ import annotations

import os

from . import _kernels_py

if os.environ.get("SAGDP_PURE_PY") == "1":
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels_cy as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "python"

assign_slots = _impl.assign_slots
count_held = _impl.count_held
fold_queue = _impl.fold_queue
count_by_quarter = _impl.count_by_quarter
enroute_matrix = _impl.enroute_matrix
