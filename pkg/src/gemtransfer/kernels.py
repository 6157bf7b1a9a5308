"""Selects the compiled kernels when the extension is built.

Set ``GEMTRANSFER_PURE_PYTHON=1`` to force the numpy fallback.
"""

import os

from . import _kernels_py

BACKEND = "python"
if not os.environ.get("GEMTRANSFER_PURE_PYTHON"):
    try:
        from . import _ckernels as _impl

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _kernels_py
else:
    _impl = _kernels_py

gem_rhs = _impl.gem_rhs
bloch_rhs = _impl.bloch_rhs

__all__ = ["BACKEND", "gem_rhs", "bloch_rhs"]
