"""Selects the scan kernel backend at import time.

The compiled Cython extension is preferred; the numpy implementation is the
fallback. SPECRECON_SCAN_BACKEND=numpy forces the fallback (used by the
benchmark and the kernel-equivalence tests).
"""

import os

from . import _scan_np

if os.environ.get("SPECRECON_SCAN_BACKEND") == "numpy":
    kernels = _scan_np
else:
    try:
        from . import _scan_cy as kernels  # type: ignore[no-redef]
    except ImportError:
        kernels = _scan_np


def backend_name():
    return kernels.BACKEND_NAME
