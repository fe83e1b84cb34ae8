"""Reference numpy backend for the marginal counting kernels.

Both backends must return bit-identical arrays: the compiled module is an
optimization, never a behavior change. Nothing here consumes randomness.
"""

import numpy as np

BACKEND = "pure"


def cell_codes(records, attrs, sizes):
    """Flat cell index per record, row-major over the given attribute order."""
    codes = np.zeros(records.shape[0], dtype=np.int64)
    for a, size in zip(attrs, sizes):
        codes *= np.int64(size)
        codes += records[:, a]
    return codes


def marginal_counts(records, attrs, sizes, n_cells):
    """Count records per cell of the marginal spanned by ``attrs``."""
    codes = cell_codes(records, attrs, sizes)
    return np.bincount(codes, minlength=int(n_cells)).astype(np.float64)
