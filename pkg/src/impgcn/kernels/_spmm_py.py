"""Pure-numpy fallback for the CSR kernels.

Vectorized with ``np.add.reduceat`` over the per-edge contribution matrix.
``reduceat`` collapses zero-length segments to the element at the segment
start instead of an empty sum, so empty rows are filtered out first and
written as zeros.
"""

import numpy as np


def csr_dense_matmul(indptr, indices, data, dense, out, accumulate):
    counts = np.diff(indptr)
    rows = np.flatnonzero(counts)
    if not accumulate:
        out[:] = 0
    if rows.size == 0:
        return
    contrib = data[:, None] * dense[indices]
    summed = np.add.reduceat(contrib, indptr[rows], axis=0)
    if accumulate:
        out[rows] += summed
    else:
        out[rows] = summed
