"""Select the compiled kernel module, falling back to pure Python.

Set ``RACHML_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _fallback

if os.environ.get("RACHML_PURE_PYTHON"):
    kernels = _fallback
else:
    try:
        from . import _core as kernels
    except ImportError:
        kernels = _fallback

BACKEND = kernels.BACKEND
