"""Kernel backend selection.

The compiled Cython core is preferred when it imported cleanly; otherwise the
pure-numpy fallback is used. Set FLOWVC_KERNEL_BACKEND=numpy (or =cython) to
force a backend explicitly; forcing cython raises if the extension is absent.

Both backends implement the same four functions with identical semantics:
conv1d_forward, conv1d_backward_w, conv1d_backward_x, nearest_codebook.
"""

import os

from . import _kernels_np

_forced = os.environ.get("FLOWVC_KERNEL_BACKEND", "").strip().lower()

if _forced in ("numpy", "python"):
    _impl = _kernels_np
elif _forced == "cython":
    from . import _kernels_cy as _impl
else:
    try:
        from . import _kernels_cy as _impl
    except ImportError:
        _impl = _kernels_np

BACKEND = _impl.BACKEND
conv1d_forward = _impl.conv1d_forward
conv1d_backward_w = _impl.conv1d_backward_w
conv1d_backward_x = _impl.conv1d_backward_x
nearest_codebook = _impl.nearest_codebook


def available_backends():
    """Names of the importable backends, numpy fallback always included."""
    names = ["numpy"]
    try:
        from . import _kernels_cy  # noqa: F401
    except ImportError:
        pass
    else:
        names.append("cython")
    return names


def get_backend(name):
    """Return a specific backend module by name ("numpy" or "cython")."""
    if name == "numpy":
        return _kernels_np
    if name == "cython":
        from . import _kernels_cy

        return _kernels_cy
    raise ValueError(f"unknown kernel backend: {name!r}")
