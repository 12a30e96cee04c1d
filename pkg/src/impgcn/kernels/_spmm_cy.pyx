# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled CSR kernels for the propagation hot loop.

The row loop with an inner axpy over the embedding dimension is the whole
kernel; everything else in the package is numpy-level. The numpy fallback in
``_spmm_py`` implements the identical contract.
"""

ctypedef fused real:
    float
    double


def csr_dense_matmul(const long long[::1] indptr,
                     const long long[::1] indices,
                     const real[::1] data,
                     const real[:, ::1] dense,
                     real[:, ::1] out,
                     bint accumulate):
    """out (+)= CSR(indptr, indices, data) @ dense.

    Shapes: CSR is (R, C), dense is (C, d), out is (R, d). ``out`` is
    zero-filled first unless ``accumulate`` is set. All validation happens in
    the Python wrapper.
    """
    cdef Py_ssize_t n_rows = out.shape[0]
    cdef Py_ssize_t dim = out.shape[1]
    cdef Py_ssize_t r, p, c, col
    cdef real w

    with nogil:
        if not accumulate:
            for r in range(n_rows):
                for c in range(dim):
                    out[r, c] = 0
        for r in range(n_rows):
            for p in range(indptr[r], indptr[r + 1]):
                col = indices[p]
                w = data[p]
                for c in range(dim):
                    out[r, c] += w * dense[col, c]
