"""Backend selection for the hot kernels.

The compiled extension is used when it imports; otherwise, or when
``SMRE_PURE_PYTHON=1`` is set, the numpy fallback is used.  ``BACKEND``
names the active one.
"""
import os

from . import _pykernels

if os.environ.get("SMRE_PURE_PYTHON", "") == "1":
    _impl = _pykernels
    BACKEND = "python"
else:
    try:
        from . import _ckernels as _impl
        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _pykernels
        BACKEND = "python"

lstm_forward = _impl.lstm_forward
lstm_backward = _impl.lstm_backward
lcs_length = _impl.lcs_length

__all__ = ["BACKEND", "lstm_forward", "lstm_backward", "lcs_length"]
