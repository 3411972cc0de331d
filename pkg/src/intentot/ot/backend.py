"""Kernel selection: compiled Cython Sinkhorn core with NumPy fallback.

Set INTENTOT_DISABLE_EXT=1 to force the pure NumPy path (used by the
backend-comparison benchmark and tests).
"""
from __future__ import annotations

import os

if os.environ.get("INTENTOT_DISABLE_EXT"):
    from ._sinkhorn_np import sinkhorn_duals

    BACKEND = "numpy"
else:
    try:
        from ._sinkhorn_cy import sinkhorn_duals  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        from ._sinkhorn_np import sinkhorn_duals  # type: ignore[no-redef]

        BACKEND = "numpy"

__all__ = ["sinkhorn_duals", "BACKEND"]
