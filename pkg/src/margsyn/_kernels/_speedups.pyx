# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled counting kernels: fused cell encoding and per-cell tally.

Must stay output-identical to margsyn._kernels.pure; the pure module is the
reference implementation and the equivalence is pinned by tests.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

BACKEND = "compiled"


def cell_codes(cnp.int64_t[:, ::1] records, cnp.int64_t[::1] attrs,
               cnp.int64_t[::1] sizes):
    """Flat cell index per record, row-major over the given attribute order."""
    cdef Py_ssize_t n = records.shape[0]
    cdef Py_ssize_t k = attrs.shape[0]
    out = np.zeros(n, dtype=np.int64)
    cdef cnp.int64_t[::1] codes = out
    cdef Py_ssize_t i, j
    cdef cnp.int64_t c
    with nogil:
        for i in range(n):
            c = 0
            for j in range(k):
                c = c * sizes[j] + records[i, attrs[j]]
            codes[i] = c
    return out


def marginal_counts(cnp.int64_t[:, ::1] records, cnp.int64_t[::1] attrs,
                    cnp.int64_t[::1] sizes, cnp.int64_t n_cells):
    """Count records per cell of the marginal spanned by ``attrs``."""
    cdef Py_ssize_t n = records.shape[0]
    cdef Py_ssize_t k = attrs.shape[0]
    out = np.zeros(n_cells, dtype=np.float64)
    cdef cnp.float64_t[::1] counts = out
    cdef Py_ssize_t i, j
    cdef cnp.int64_t c
    with nogil:
        for i in range(n):
            c = 0
            for j in range(k):
                c = c * sizes[j] + records[i, attrs[j]]
            counts[c] += 1.0
    return out
