#!/usr/bin/env python3
"""Benchmark the compiled CSR kernel against the numpy fallback.

The sparse matrix-times-embedding product is the training hot loop (it runs
2 * groups times per propagation layer per batch), so this is the comparison
that justifies shipping the extension. scipy.sparse is included as an
external yardstick when available.

    python3 benchmarks/bench_spmm.py [--dim 64] [--repeats 5]
"""

import argparse
import time

import numpy as np

from impgcn.kernels import BACKEND
from impgcn.kernels import _spmm_py

try:
    from impgcn.kernels import _spmm_cy
except ImportError:
    _spmm_cy = None

try:
    import scipy.sparse as sp
except ImportError:
    sp = None


def random_csr(rng, rows, cols, nnz_per_row):
    indptr = np.arange(0, (rows + 1) * nnz_per_row, nnz_per_row, dtype=np.int64)
    indices = rng.integers(0, cols, size=rows * nnz_per_row, dtype=np.int64)
    data = rng.standard_normal(rows * nnz_per_row)
    return indptr, indices, data


def time_call(fn, repeats):
    best = np.inf
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--dim", type=int, default=64)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    print(f"selected backend: {BACKEND}")
    header = f"{'rows':>8} {'nnz':>9} {'numpy_ms':>9}"
    if _spmm_cy is not None:
        header += f" {'cython_ms':>9} {'speedup':>8}"
    if sp is not None:
        header += f" {'scipy_ms':>9}"
    print(header)

    for rows, nnz_per_row in ((2_000, 10), (20_000, 20), (70_000, 30)):
        cols = rows // 2
        indptr, indices, data = random_csr(rng, rows, cols, nnz_per_row)
        dense = np.ascontiguousarray(rng.standard_normal((cols, args.dim)))
        out = np.empty((rows, args.dim))

        t_py = time_call(lambda: _spmm_py.csr_dense_matmul(
            indptr, indices, data, dense, out, False), args.repeats)
        line = f"{rows:>8} {rows * nnz_per_row:>9} {1e3 * t_py:>9.2f}"
        if _spmm_cy is not None:
            t_cy = time_call(lambda: _spmm_cy.csr_dense_matmul(
                indptr, indices, data, dense, out, False), args.repeats)
            line += f" {1e3 * t_cy:>9.2f} {t_py / t_cy:>8.2f}"
        if sp is not None:
            mat = sp.csr_matrix((data, indices, indptr), shape=(rows, cols))
            t_sp = time_call(lambda: mat @ dense, args.repeats)
            line += f" {1e3 * t_sp:>9.2f}"
        print(line)


if __name__ == "__main__":
    main()
