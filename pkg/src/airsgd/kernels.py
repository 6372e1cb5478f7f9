"""Kernel backend selection.

Prefers the compiled extension; falls back to the numpy implementations when
the extension is missing (source-only install) or when the environment
variable AIRSGD_FORCE_PYTHON_KERNELS is set (benchmarks, differential tests).

Exposes:
    BACKEND                 "cython" | "python"
    sparse_project          (basis_t, support, values) -> projected vector
    soft_threshold_count    (x, tau) -> (shrunk vector, surviving-entry count)
"""

import os

from . import _kernels_py

if os.environ.get("AIRSGD_FORCE_PYTHON_KERNELS"):
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:  # pragma: no cover - depends on build environment
        _impl = _kernels_py
        BACKEND = "python"

sparse_project = _impl.sparse_project
soft_threshold_count = _impl.soft_threshold_count
