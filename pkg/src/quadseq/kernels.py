"""Kernel dispatch: compiled extension when importable, pure Python otherwise.

Set ``QUADSEQ_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _pykernels

BACKEND = "python"
if os.environ.get("QUADSEQ_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl

        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels
else:
    _impl = _pykernels

discover_walks = _impl.discover_walks
max_weight_matching = _impl.max_weight_matching
