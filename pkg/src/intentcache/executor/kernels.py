"""Grouped-reduction kernels: compiled when available, numpy otherwise.

Set ``INTENTCACHE_PURE_PYTHON=1`` to force the fallback.
"""

from __future__ import annotations

import os

if os.environ.get("INTENTCACHE_PURE_PYTHON"):
    from ._kernels_py import group_count, group_max, group_min, group_sum

    BACKEND = "python"
else:
    try:
        from ._kernels import group_count, group_max, group_min, group_sum

        BACKEND = "cython"
    except ImportError:
        from ._kernels_py import group_count, group_max, group_min, group_sum

        BACKEND = "python"

__all__ = ["BACKEND", "group_count", "group_max", "group_min", "group_sum"]
