"""Numerical core: orbit kernels for the built-in drivers.

The compiled extension ``_ckernels`` is used when it was built; otherwise the
numpy fallback ``_pykernels`` is loaded.  Set ``HOMOGENIZE_BACKEND=python`` to
force the fallback.
"""

import os

from . import _pykernels

if os.environ.get("HOMOGENIZE_BACKEND", "").lower() == "python":
    kernels = _pykernels
    BACKEND = "python"
else:
    try:
        from . import _ckernels as kernels
        BACKEND = "cython"
    except ImportError:  # extension not built
        kernels = _pykernels
        BACKEND = "python"


def available_backends():
    out = {"python": _pykernels}
    try:
        from . import _ckernels
        out["cython"] = _ckernels
    except ImportError:
        pass
    return out


__all__ = ["kernels", "BACKEND", "available_backends"]
