"""Pick the compiled AUC kernels when available, else the numpy ones.

Set ``FEDSIM_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _auc_py

_impl = _auc_py
BACKEND = "python"

if os.environ.get("FEDSIM_PURE_PYTHON", "").lower() not in ("1", "true", "yes"):
    try:
        from . import _auc_ext as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        pass

auc_weighted = _impl.auc_weighted
bootstrap_auc = _impl.bootstrap_auc

__all__ = ["BACKEND", "auc_weighted", "bootstrap_auc"]
