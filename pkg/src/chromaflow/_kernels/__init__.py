"""Kernel backend selection.

The compiled extension is preferred when it imported cleanly; setting
``CHROMAFLOW_PURE=1`` forces the numpy fallback (used by the tests that
compare the two backends and by environments without a compiler).
"""

import os

from . import _numpy_impl

if os.environ.get("CHROMAFLOW_PURE") == "1":
    _impl = _numpy_impl
else:
    try:
        from . import _native as _impl  # type: ignore[attr-defined]
    except ImportError:
        _impl = _numpy_impl

BACKEND = _impl.BACKEND
HAVE_NATIVE = BACKEND == "native"

block_search = _impl.block_search
splat_hist = _impl.splat_hist


def get_impl(backend=None):
    """Return the kernel module for ``backend`` ("native"/"numpy"/None=selected)."""
    if backend is None:
        return _impl
    if backend == "numpy":
        return _numpy_impl
    if backend == "native":
        from . import _native  # noqa: PLC0415

        return _native
    raise ValueError(f"unknown kernel backend: {backend}")
