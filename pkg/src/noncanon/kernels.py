"""Backend selection for the hot kernels.

The compiled extension is used when it imports; otherwise, or when the
environment variable ``NONCANON_PURE_PYTHON`` is set to a non-empty value,
the NumPy fallback is used. ``BACKEND`` names the active implementation.
"""
import os

from . import _pykernels

if os.environ.get("NONCANON_PURE_PYTHON"):
    _impl = _pykernels
    BACKEND = "python"
else:
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]
        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _pykernels
        BACKEND = "python"

volterra_trapezoid = _impl.volterra_trapezoid
coincidence_histogram = _impl.coincidence_histogram

__all__ = ["BACKEND", "volterra_trapezoid", "coincidence_histogram"]
