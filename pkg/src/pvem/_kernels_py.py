"""Pure-Python twins of the routines in ``_kernels.pyx``.

Same signatures and in-place semantics. Triangular work is delegated to
``scipy.sparse.linalg.spsolve_triangular``; IC(0) runs row by row on a dense
work vector.
"""

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve_triangular


def _csr(indptr, indices, data):
    n = len(indptr) - 1
    return sp.csr_matrix((data, indices, indptr), shape=(n, n))


def _check_diagonal(mat):
    diag = mat.diagonal()
    bad = np.flatnonzero(diag == 0.0)
    if bad.size:
        raise ZeroDivisionError(f"zero diagonal in row {bad[0]}")


def gs_forward(indptr, indices, data, g, z):
    K = _csr(indptr, indices, data)
    _check_diagonal(K)
    r = g - K @ z
    z += spsolve_triangular(sp.tril(K, format="csr"), r, lower=True)


def gs_backward(indptr, indices, data, g, z):
    K = _csr(indptr, indices, data)
    _check_diagonal(K)
    r = g - K @ z
    z += spsolve_triangular(sp.triu(K, format="csr"), r, lower=False)


def ic0_factor(indptr, indices, data, shift):
    n = len(indptr) - 1
    lower = sp.tril(_csr(indptr, indices, data), format="csr")
    lower.sort_indices()
    lptr = lower.indptr.astype(np.int32)
    lind = lower.indices.astype(np.int32)
    lval = lower.data.astype(np.float64).copy()
    work = np.zeros(n)
    for i in range(n):
        lo, hi = lptr[i], lptr[i + 1]
        if hi == lo or lind[hi - 1] != i:
            return None
        cols = lind[lo:hi]
        lval[hi - 1] += shift
        work[cols] = lval[lo:hi]
        for kk in range(lo, hi - 1):
            k = lind[kk]
            klo, khi = lptr[k], lptr[k + 1]
            s = work[k] - np.dot(work[lind[klo:khi - 1]], lval[klo:khi - 1])
            s /= lval[khi - 1]
            work[k] = s
            lval[kk] = s
        piv = work[i] - np.dot(lval[lo:hi - 1], lval[lo:hi - 1])
        work[cols] = 0.0
        if piv <= 0.0:
            return None
        lval[hi - 1] = np.sqrt(piv)
    return lptr, lind, lval


def lower_solve(indptr, indices, data, x):
    L = _csr(indptr, indices, data)
    x[:] = spsolve_triangular(L, x, lower=True)


def lower_transpose_solve(indptr, indices, data, x):
    L = _csr(indptr, indices, data)
    x[:] = spsolve_triangular(L.T.tocsr(), x, lower=False)
