"""Hot numeric kernels with a compiled core and a pure-numpy fallback.

The compiled extension is selected automatically when importable; set
``SPLITFLOW_KERNELS=numpy`` (or ``cython``) to force a backend.
"""

import os

from . import _numpy

_requested = os.environ.get("SPLITFLOW_KERNELS", "auto").lower()

_impl = None
if _requested in ("auto", "cython"):
    try:
        from . import _core as _impl  # type: ignore[attr-defined]
    except ImportError:
        _impl = None
        if _requested == "cython":
            raise
if _impl is None:
    _impl = _numpy

log_unitary = _impl.log_unitary
exp_skew = _impl.exp_skew
transition_logs = _impl.transition_logs


def backend_name() -> str:
    return _impl.BACKEND


def numpy_backend():
    """The fallback module, importable regardless of the active backend."""
    return _numpy


def compiled_backend():
    """The compiled module, or None when it is not built."""
    try:
        from . import _core
    except ImportError:
        return None
    return _core
