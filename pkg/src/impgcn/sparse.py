"""Minimal CSR container used by the graph and the masked propagation operators."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kernels import spmm


@dataclass(frozen=True)
class CsrMatrix:
    """Read-only CSR matrix. ``data`` carries the per-edge weights."""

    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray
    shape: tuple[int, int]

    @property
    def nnz(self) -> int:
        return int(self.indices.shape[0])

    def matmul(self, dense, out=None, accumulate=False):
        """``out (+)= self @ dense`` via the selected kernel backend."""
        if dense.shape[0] != self.shape[1]:
            raise ValueError(f"cannot multiply {self.shape} by {dense.shape}")
        return spmm(self.indptr, self.indices, self.data, dense, out, accumulate)

    def astype(self, dtype) -> "CsrMatrix":
        dtype = np.dtype(dtype)
        if self.data.dtype == dtype:
            return self
        return CsrMatrix(self.indptr, self.indices, self.data.astype(dtype), self.shape)

    def to_coo(self):
        """Return (rows, cols, values) triplets; diagnostic/test helper."""
        counts = np.diff(self.indptr)
        rows = np.repeat(np.arange(self.shape[0], dtype=np.int64), counts)
        return rows, self.indices.copy(), self.data.copy()


def csr_from_sorted_coo(rows, cols, data, shape) -> CsrMatrix:
    """Build a CsrMatrix from COO triplets already sorted by (row, col)."""
    indptr = np.zeros(shape[0] + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=shape[0]), out=indptr[1:])
    return CsrMatrix(indptr, np.ascontiguousarray(cols, dtype=np.int64),
                     np.ascontiguousarray(data), shape)
