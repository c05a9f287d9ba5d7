"""Backend selection for the hot kernels.

The compiled extension is used when it was built; otherwise the pure-Python
module takes over.  Set ``SOTEST_PURE_PYTHON=1`` to force the fallback.
"""
import os

from sotest import _kernels_py

if os.environ.get("SOTEST_PURE_PYTHON"):
    _impl = _kernels_py
else:
    try:
        from sotest import _kernels as _impl
    except ImportError:
        _impl = _kernels_py

BACKEND = _impl.BACKEND
as_vector = _impl.as_vector
partition_means = _impl.partition_means
mean_spread = _impl.mean_spread
homogeneity_fitness = _impl.homogeneity_fitness
sample_row = _impl.sample_row

__all__ = [
    "BACKEND",
    "as_vector",
    "partition_means",
    "mean_spread",
    "homogeneity_fitness",
    "sample_row",
]
