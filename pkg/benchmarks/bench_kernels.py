"""Benchmark: compiled scoring kernel vs the numpy fallback.

Run after installing the package:

    python benchmarks/bench_kernels.py
"""

import time

import numpy as np
import scipy.sparse as sp

from indexkit import kernels


def bench(fn, indptr, indices, data, queries, repeats=3):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        for query in queries:
            fn(indptr, indices, data, query)
        best = min(best, time.perf_counter() - start)
    return best


def main():
    n_subjects, n_features, n_queries = 20_000, 50_000, 200
    nnz_per_row = 50
    rng = np.random.default_rng(0)
    indices = rng.integers(0, n_features, size=n_subjects * nnz_per_row)
    data = rng.random(n_subjects * nnz_per_row)
    indptr = np.arange(0, n_subjects * nnz_per_row + 1, nnz_per_row)
    matrix = sp.csr_matrix((data, indices, indptr), shape=(n_subjects, n_features))
    queries = [rng.standard_normal(n_features) for _ in range(n_queries)]
    args = (matrix.indptr, matrix.indices, matrix.data, queries)

    print(f"matrix: {n_subjects} x {n_features}, nnz={matrix.nnz}, {n_queries} queries")
    print(f"active backend: {kernels.BACKEND}")
    t_active = bench(kernels.csr_dense_dot, *args)
    t_ref = bench(kernels.reference_csr_dense_dot, *args)
    print(f"active   ({kernels.BACKEND}): {t_active:.3f} s  "
          f"({n_queries / t_active:.0f} queries/s)")
    print(f"fallback (python):   {t_ref:.3f} s  ({n_queries / t_ref:.0f} queries/s)")
    if kernels.BACKEND == "compiled":
        print(f"speedup: {t_ref / t_active:.2f}x")


if __name__ == "__main__":
    main()
