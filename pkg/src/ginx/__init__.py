"""Benchmark harness for retrain-based evaluation of graph explainers."""

import os as _os

# Single-threaded BLAS: the model's matmuls are too small to gain from
# threads, and numpy's and scipy's separate OpenBLAS pools oversubscribe
# small boxes badly (measured 25x slowdowns). Parallelism belongs at the
# evaluation-grid level (--workers). Must run before numpy first loads;
# harmless when numpy is already initialized.
for _var in (
    "OPENBLAS_NUM_THREADS",
    "OMP_NUM_THREADS",
    "MKL_NUM_THREADS",
    "NUMEXPR_NUM_THREADS",
):
    _os.environ.setdefault(_var, "1")

__version__ = "0.1.0"
