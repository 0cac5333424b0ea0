"""Select the compiled pair-sum kernels, falling back to numpy.

Set ``HEATBV_PURE=1`` to force the fallback.
"""

import os

BACKEND = "python"

if os.environ.get("HEATBV_PURE", "") not in ("1", "true", "yes"):
    try:
        from ._kernels import dense_pair_sum, offset_pair_sum  # noqa: F401

        BACKEND = "cython"
    except ImportError:  # extension not built
        pass

if BACKEND == "python":
    from ._kernels_py import dense_pair_sum, offset_pair_sum  # noqa: F401

__all__ = ["BACKEND", "dense_pair_sum", "offset_pair_sum"]
