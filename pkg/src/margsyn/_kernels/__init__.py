"""Backend selection for the counting kernels.

The compiled extension is preferred when importable; setting MARGSYN_PURE=1
in the environment forces the numpy reference backend. Callers pass int64
C-contiguous arrays so the two backends stay interchangeable.
"""

import os

from margsyn._kernels import pure

if os.environ.get("MARGSYN_PURE") == "1":
    _impl = pure
else:
    try:
        from margsyn._kernels import _speedups as _impl
    except ImportError:
        _impl = pure

BACKEND = _impl.BACKEND
cell_codes = _impl.cell_codes
marginal_counts = _impl.marginal_counts

__all__ = ["BACKEND", "cell_codes", "marginal_counts", "pure"]
