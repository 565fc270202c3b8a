"""Select the compiled kernels when available, else the pure-Python ones.

Set FROZENCSP_PURE_PYTHON=1 to force the fallback.
"""
import os

if os.environ.get("FROZENCSP_PURE_PYTHON", "") not in ("", "0"):
    from . import _fallback as kernels
    BACKEND = "python"
else:
    try:
        from . import _kernels as kernels
        BACKEND = "cython"
    except ImportError:  # extension not built
        from . import _fallback as kernels
        BACKEND = "python"

__all__ = ["kernels", "BACKEND"]
