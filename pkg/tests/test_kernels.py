import numpy as np
import pytest
import scipy.sparse as sp

from impgcn.kernels import BACKEND, spmm
from impgcn.kernels import _spmm_py


def random_csr(rng, rows, cols, density, dtype):
    mat = sp.random(rows, cols, density=density, random_state=np.random.RandomState(7),
                    format="csr", dtype=np.float64)
    return (mat.indptr.astype(np.int64), mat.indices.astype(np.int64),
            mat.data.astype(dtype), mat)


@pytest.mark.parametrize("dtype", [np.float32, np.float64])
@pytest.mark.parametrize("dim", [1, 3, 16])
def test_matches_scipy(rng, dtype, dim):
    indptr, indices, data, ref = random_csr(rng, 40, 23, 0.15, dtype)
    dense = rng.standard_normal((23, dim)).astype(dtype)
    out = spmm(indptr, indices, data, dense)
    want = ref.astype(dtype) @ dense
    tol = 1e-5 if dtype == np.float32 else 1e-12
    np.testing.assert_allclose(out, want, rtol=tol, atol=tol)


def test_empty_rows_are_zero(rng):
    # row 1 and the last row hold no entries
    indptr = np.array([0, 2, 2, 3, 3], dtype=np.int64)
    indices = np.array([0, 2, 1], dtype=np.int64)
    data = np.array([1.0, 2.0, 3.0])
    dense = rng.standard_normal((3, 4))
    out = spmm(indptr, indices, data, dense)
    np.testing.assert_allclose(out[0], dense[0] + 2 * dense[2])
    np.testing.assert_array_equal(out[1], 0)
    np.testing.assert_allclose(out[2], 3 * dense[1])
    np.testing.assert_array_equal(out[3], 0)


def test_empty_matrix(rng):
    indptr = np.zeros(6, dtype=np.int64)
    out = spmm(indptr, np.empty(0, dtype=np.int64), np.empty(0), rng.standard_normal((4, 3)))
    np.testing.assert_array_equal(out, 0)


def test_accumulate_adds(rng):
    indptr, indices, data, ref = random_csr(rng, 10, 8, 0.3, np.float64)
    dense = rng.standard_normal((8, 5))
    out = np.ones((10, 5))
    spmm(indptr, indices, data, dense, out=out, accumulate=True)
    np.testing.assert_allclose(out, 1.0 + ref @ dense)


def test_backends_agree(rng):
    indptr, indices, data, _ = random_csr(rng, 60, 31, 0.2, np.float64)
    dense = rng.standard_normal((31, 7))
    selected = spmm(indptr, indices, data, dense)
    fallback = np.empty_like(selected)
    _spmm_py.csr_dense_matmul(indptr, indices, data, dense, fallback, False)
    np.testing.assert_allclose(selected, fallback, rtol=1e-13, atol=1e-13)


def test_backend_is_reported():
    assert BACKEND in ("cython", "numpy")


def test_dtype_mismatch_rejected(rng):
    indptr = np.array([0, 1], dtype=np.int64)
    with pytest.raises(ValueError, match="dtype"):
        spmm(indptr, np.array([0], dtype=np.int64), np.array([1.0], dtype=np.float32),
             rng.standard_normal((1, 2)))


def test_bad_out_shape_rejected(rng):
    indptr = np.array([0, 1], dtype=np.int64)
    with pytest.raises(ValueError, match="shape"):
        spmm(indptr, np.array([0], dtype=np.int64), np.array([1.0]),
             rng.standard_normal((1, 2)), out=np.empty((2, 2)))
