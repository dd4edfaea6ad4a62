"""Kernel backend selected at import.

The compiled ``_ckernels`` extension is used when it was built; otherwise the
numpy implementations in ``_pykernels`` are used. Set ``LTCS_KERNELS=python``
to force the fallback, or ``LTCS_KERNELS=cython`` to fail loudly when the
extension is missing. Dtypes the extension does not cover (extended
precision, used by gradient-check oracles) and mixed-dtype calls always take
the numpy path.
"""
import os

import numpy as np

from . import _pykernels

_choice = os.environ.get("LTCS_KERNELS", "auto").lower()

if _choice == "python":
    _impl = _pykernels
else:
    try:
        from . import _ckernels as _impl
    except ImportError:
        if _choice == "cython":
            raise
        _impl = _pykernels

BACKEND = _impl.BACKEND
_NATIVE = (np.dtype(np.float32), np.dtype(np.float64))


def _dispatch(name):
    fast = getattr(_impl, name)
    if _impl is _pykernels:
        return fast
    slow = getattr(_pykernels, name)

    def kernel(x, *args):
        native = x.dtype in _NATIVE and all(
            a.dtype == x.dtype for a in args if isinstance(a, np.ndarray))
        return (fast if native else slow)(x, *args)

    kernel.__name__ = name
    return kernel


smelu_forward = _dispatch("smelu_forward")
smelu_backward = _dispatch("smelu_backward")
layer_norm_forward = _dispatch("layer_norm_forward")
layer_norm_backward = _dispatch("layer_norm_backward")
attention_forward = _dispatch("attention_forward")
attention_backward = _dispatch("attention_backward")


def compiled_available():
    try:
        from . import _ckernels  # noqa: F401
    except ImportError:
        return False
    return True
