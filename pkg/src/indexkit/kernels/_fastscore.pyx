# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled CSR-row x dense-vector scoring kernel."""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def csr_dense_dot(indptr, indices, data, query):
    cdef cnp.int64_t[::1] indptr_v = np.ascontiguousarray(indptr, dtype=np.int64)
    cdef cnp.int64_t[::1] indices_v = np.ascontiguousarray(indices, dtype=np.int64)
    cdef double[::1] data_v = np.ascontiguousarray(data, dtype=np.float64)
    cdef double[::1] query_v = np.ascontiguousarray(query, dtype=np.float64)

    cdef Py_ssize_t n_rows = indptr_v.shape[0] - 1
    out = np.zeros(n_rows, dtype=np.float64)
    cdef double[::1] out_v = out

    cdef Py_ssize_t i, j
    cdef double acc
    for i in range(n_rows):
        acc = 0.0
        for j in range(indptr_v[i], indptr_v[i + 1]):
            acc += data_v[j] * query_v[indices_v[j]]
        out_v[i] = acc
    return out
