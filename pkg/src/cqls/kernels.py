"""Kernel dispatch: the compiled extension when importable, numpy otherwise.

Set ``CQLS_PURE_PYTHON=1`` to force the fallback (used by the benchmark and
by the backend-agreement tests).
"""

import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if os.environ.get("CQLS_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ext as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py

class_moments = _impl.class_moments
subset_sums = _impl.subset_sums

__all__ = ["BACKEND", "class_moments", "subset_sums"]
