# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled sparse kernels: Gauss-Seidel sweeps, IC(0) and triangular solves.

All routines take the raw CSR arrays of a square matrix and work in place
on float64 vectors. Column indices within a row must be sorted.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()

ctypedef cnp.int32_t idx_t


def gs_forward(const idx_t[::1] indptr, const idx_t[::1] indices,
               const double[::1] data, const double[::1] g, double[::1] z):
    """One forward sweep, z <- z + L^{-1}(g - K z) with L = tril(K)."""
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef Py_ssize_t i, jj, j
    cdef double s, diag
    for i in range(n):
        s = g[i]
        diag = 0.0
        for jj in range(indptr[i], indptr[i + 1]):
            j = indices[jj]
            if j == i:
                diag = data[jj]
            else:
                s -= data[jj] * z[j]
        if diag == 0.0:
            raise ZeroDivisionError(f"zero diagonal in row {i}")
        z[i] = s / diag


def gs_backward(const idx_t[::1] indptr, const idx_t[::1] indices,
                const double[::1] data, const double[::1] g, double[::1] z):
    """One backward sweep, z <- z + U^{-1}(g - K z) with U = triu(K)."""
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef Py_ssize_t i, jj, j
    cdef double s, diag
    for i in range(n - 1, -1, -1):
        s = g[i]
        diag = 0.0
        for jj in range(indptr[i], indptr[i + 1]):
            j = indices[jj]
            if j == i:
                diag = data[jj]
            else:
                s -= data[jj] * z[j]
        if diag == 0.0:
            raise ZeroDivisionError(f"zero diagonal in row {i}")
        z[i] = s / diag


def ic0_factor(const idx_t[::1] indptr, const idx_t[::1] indices,
               const double[::1] data, double shift):
    """Zero-fill incomplete Cholesky of tril(K) + shift*I.

    Returns the values of L on the lower-triangular pattern (diagonal last
    in each row), or None when a non-positive pivot shows up.
    """
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef Py_ssize_t i, jj, kk, k, j, pos
    cdef double s, piv
    cdef cnp.ndarray[idx_t, ndim=1] lptr_arr = np.zeros(n + 1, dtype=np.int32)
    cdef idx_t[::1] lptr = lptr_arr
    for i in range(n):
        pos = 0
        for jj in range(indptr[i], indptr[i + 1]):
            if indices[jj] <= i:
                pos += 1
        lptr[i + 1] = lptr[i] + pos
    cdef Py_ssize_t nnz = lptr[n]
    cdef cnp.ndarray[idx_t, ndim=1] lind_arr = np.empty(nnz, dtype=np.int32)
    cdef cnp.ndarray[double, ndim=1] lval_arr = np.empty(nnz, dtype=np.float64)
    cdef idx_t[::1] lind = lind_arr
    cdef double[::1] lval = lval_arr
    cdef double[::1] work = np.zeros(n, dtype=np.float64)

    for i in range(n):
        pos = lptr[i]
        for jj in range(indptr[i], indptr[i + 1]):
            j = indices[jj]
            if j <= i:
                lind[pos] = j
                lval[pos] = data[jj] + (shift if j == i else 0.0)
                work[j] = lval[pos]
                pos += 1
        if lind[lptr[i + 1] - 1] != i:
            return None
        # off-diagonal entries in ascending column order
        for kk in range(lptr[i], lptr[i + 1] - 1):
            k = lind[kk]
            s = work[k]
            for jj in range(lptr[k], lptr[k + 1] - 1):
                s -= work[lind[jj]] * lval[jj]
            s /= lval[lptr[k + 1] - 1]
            work[k] = s
            lval[kk] = s
        piv = work[i]
        for kk in range(lptr[i], lptr[i + 1] - 1):
            piv -= lval[kk] * lval[kk]
        if piv <= 0.0:
            for kk in range(lptr[i], lptr[i + 1]):
                work[lind[kk]] = 0.0
            return None
        lval[lptr[i + 1] - 1] = sqrt(piv)
        for kk in range(lptr[i], lptr[i + 1]):
            work[lind[kk]] = 0.0
    return lptr_arr, lind_arr, lval_arr


def lower_solve(const idx_t[::1] indptr, const idx_t[::1] indices,
                const double[::1] data, double[::1] x):
    """Solve L y = x in place; L lower triangular CSR, diagonal last per row."""
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef Py_ssize_t i, jj
    cdef double s
    for i in range(n):
        s = x[i]
        for jj in range(indptr[i], indptr[i + 1] - 1):
            s -= data[jj] * x[indices[jj]]
        x[i] = s / data[indptr[i + 1] - 1]


def lower_transpose_solve(const idx_t[::1] indptr, const idx_t[::1] indices,
                          const double[::1] data, double[::1] x):
    """Solve L^T y = x in place using the CSR arrays of L."""
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef Py_ssize_t i, jj
    cdef double xi
    for i in range(n - 1, -1, -1):
        xi = x[i] / data[indptr[i + 1] - 1]
        x[i] = xi
        for jj in range(indptr[i], indptr[i + 1] - 1):
            x[indices[jj]] -= data[jj] * xi
