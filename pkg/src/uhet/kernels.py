"""Backend dispatch for the U-statistic hot kernels.

The default backend is numba when it imports cleanly; set the environment
variable ``UHET_BACKEND=numpy`` (or ``numba``) before import to force one.
``benchmarks/bench_kernels.py`` compares the two.
"""

import os

from . import _kernels_np

_requested = os.environ.get("UHET_BACKEND", "").strip().lower()
if _requested not in ("", "numpy", "numba"):
    raise ValueError(
        f"UHET_BACKEND must be 'numpy' or 'numba', got {_requested!r}"
    )

if _requested == "numpy":
    BACKEND = "numpy"
    _impl = _kernels_np
else:
    try:
        from . import _kernels_nb as _impl

        BACKEND = "numba"
    except ImportError:
        if _requested == "numba":
            raise
        BACKEND = "numpy"
        _impl = _kernels_np

exact_pair = _impl.exact_pair
sampled_pair = _impl.sampled_pair
