"""Scoring kernels with a compiled fast path.

The hot loop of the label-tree backend is "dot every stored sparse row
against a dense query vector". A Cython extension implements it; a numpy
fallback is selected automatically when the extension is not built or
when INDEXKIT_PURE=1 is set.
"""

from __future__ import annotations

import os

from . import _pyscore

if os.environ.get("INDEXKIT_PURE"):
    _impl = _pyscore
    BACKEND = "python"
else:
    try:
        from . import _fastscore as _impl  # type: ignore[no-redef]

        BACKEND = "compiled"
    except ImportError:
        _impl = _pyscore
        BACKEND = "python"


def csr_dense_dot(indptr, indices, data, query):
    """scores[i] = <row i of the CSR matrix, query> for a dense query."""
    return _impl.csr_dense_dot(indptr, indices, data, query)


def reference_csr_dense_dot(indptr, indices, data, query):
    """Always the pure-python implementation, for cross-checking."""
    return _pyscore.csr_dense_dot(indptr, indices, data, query)
