"""Backend selection for the hot LiLAW kernel.

The compiled extension is used when it imports and ``LILAW_LAB_PURE`` is not
set to a truthy value; otherwise the numpy implementation is used.
"""

import os

from . import _kernels_py

BACKEND = "python"
lilaw_terms = _kernels_py.lilaw_terms
softmax_confidence = _kernels_py.softmax_confidence

if os.environ.get("LILAW_LAB_PURE", "").lower() not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError:
        _compiled = None
    if _compiled is not None:
        lilaw_terms = _compiled.lilaw_terms
        softmax_confidence = _compiled.softmax_confidence
        BACKEND = "cython"


def get_backend(name: str):
    """Return the kernel module for ``"python"`` or ``"cython"``."""
    if name == "python":
        return _kernels_py
    if name == "cython":
        from . import _kernels

        return _kernels
    raise ValueError(f"unknown backend {name!r}")
