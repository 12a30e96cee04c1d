"""Sparse kernel backend selection.

The compiled Cython extension is used when it imports cleanly; otherwise the
numpy implementation takes over with the same semantics. Setting the
environment variable ``IMPGCN_PURE_PYTHON=1`` before import forces the
fallback (used by the benchmark and by tests that compare the two backends).
"""

import os

import numpy as np

if os.environ.get("IMPGCN_PURE_PYTHON"):
    from ._spmm_py import csr_dense_matmul as _csr_dense_matmul

    BACKEND = "numpy"
else:
    try:
        from ._spmm_cy import csr_dense_matmul as _csr_dense_matmul

        BACKEND = "cython"
    except ImportError:  # extension not built
        from ._spmm_py import csr_dense_matmul as _csr_dense_matmul

        BACKEND = "numpy"


def spmm(indptr, indices, data, dense, out=None, accumulate=False):
    """Multiply a CSR matrix by a dense matrix: ``out (+)= A @ dense``.

    Parameters
    ----------
    indptr, indices, data
        CSR arrays; ``indptr`` has length ``n_rows + 1``, ``indices`` and
        ``data`` have one entry per stored element. Indices are int64 and
        ``data.dtype`` must match ``dense.dtype`` (float32 or float64).
    dense
        C-contiguous (n_cols, d) array.
    out
        Optional preallocated (n_rows, d) array. Allocated when omitted.
    accumulate
        When true, add into ``out`` instead of overwriting it.
    """
    n_rows = indptr.shape[0] - 1
    if dense.ndim != 2:
        raise ValueError("dense operand must be 2-D")
    if data.dtype != dense.dtype:
        raise ValueError(f"dtype mismatch: data {data.dtype} vs dense {dense.dtype}")
    if out is None:
        if accumulate:
            raise ValueError("accumulate=True requires a preallocated out array")
        out = np.empty((n_rows, dense.shape[1]), dtype=dense.dtype)
    elif out.shape != (n_rows, dense.shape[1]):
        raise ValueError(f"out has shape {out.shape}, expected {(n_rows, dense.shape[1])}")
    _csr_dense_matmul(
        np.ascontiguousarray(indptr, dtype=np.int64),
        np.ascontiguousarray(indices, dtype=np.int64),
        np.ascontiguousarray(data),
        np.ascontiguousarray(dense),
        out,
        accumulate,
    )
    return out
