"""Numpy fallback for the scoring kernel."""

from __future__ import annotations

import numpy as np


def csr_dense_dot(indptr, indices, data, query):
    indptr = np.asarray(indptr, dtype=np.int64)
    indices = np.asarray(indices, dtype=np.int64)
    data = np.asarray(data, dtype=np.float64)
    query = np.asarray(query, dtype=np.float64)
    # per-nonzero products, summed per row via the indptr boundaries
    products = data * query[indices]
    sums = np.add.reduceat(products, indptr[:-1]) if products.size else np.zeros(0)
    out = np.zeros(len(indptr) - 1, dtype=np.float64)
    nonempty = indptr[:-1] < indptr[1:]
    if products.size:
        out[nonempty] = sums[nonempty]
    return out
