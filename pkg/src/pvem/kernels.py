"""Backend selection for the sparse smoothing and factorization kernels.

The compiled extension ``pvem._kernels`` is used when it imports; otherwise
(or when ``PVEM_PURE_PYTHON=1`` is set) the routines of ``pvem._kernels_py``
take over. ``BACKEND`` names the active one.
"""

import os

import numpy as np
import scipy.sparse as sp

from . import _kernels_py

_native = None
if os.environ.get("PVEM_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _native
    except ImportError:  # extension not built
        _native = None

BACKEND = "cython" if _native is not None else "python"


def backend_module(name=None):
    """Return the kernel module for ``name`` ("cython", "python" or None=active)."""
    if name is None:
        name = BACKEND
    if name == "cython":
        if _native is None:
            raise ImportError("compiled kernels are not available")
        return _native
    if name == "python":
        return _kernels_py
    raise ValueError(f"unknown backend {name!r}")


def csr_arrays(mat):
    """Canonical (int32 indptr, int32 indices, float64 data) of a CSR matrix."""
    mat = sp.csr_matrix(mat)
    mat.sum_duplicates()
    mat.sort_indices()
    return (np.ascontiguousarray(mat.indptr, dtype=np.int32),
            np.ascontiguousarray(mat.indices, dtype=np.int32),
            np.ascontiguousarray(mat.data, dtype=np.float64))


def gs_forward(arrays, g, z, backend=None):
    backend_module(backend).gs_forward(*arrays, np.ascontiguousarray(g, dtype=float), z)


def gs_backward(arrays, g, z, backend=None):
    backend_module(backend).gs_backward(*arrays, np.ascontiguousarray(g, dtype=float), z)


def ic0_factor(arrays, shift=0.0, backend=None):
    return backend_module(backend).ic0_factor(*arrays, float(shift))


def lower_solve(arrays, x, backend=None):
    backend_module(backend).lower_solve(*arrays, x)


def lower_transpose_solve(arrays, x, backend=None):
    backend_module(backend).lower_transpose_solve(*arrays, x)
