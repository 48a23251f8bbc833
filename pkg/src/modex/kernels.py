"""Kernel backend selection.

The compiled extension is used when it imports; ``MODEX_PURE=1`` forces the
pure-Python kernels.  Both expose the same functions (see ``_pykernels``).
"""
import os

from . import _pykernels

_impl = _pykernels
if not os.environ.get("MODEX_PURE"):
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = _pykernels

BACKEND = _impl.BACKEND
lub = _impl.lub
glb = _impl.glb
leq = _impl.leq
status = _impl.status
first_unknown = _impl.first_unknown
unit_propagate = _impl.unit_propagate
first_firing = _impl.first_firing
up_trace = _impl.up_trace


def available_backends():
    """Modules implementing the kernel API that can be imported here."""
    out = {"python": _pykernels}
    try:
        from . import _ckernels
    except ImportError:
        pass
    else:
        out["cython"] = _ckernels
    return out
