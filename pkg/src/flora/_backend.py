"""Select the Gaussian kernel implementation at import time.

The compiled kernel is preferred. Set ``FLORA_PURE_PYTHON=1`` to force the
numpy fallback (both produce bit-identical samples).
"""

import os

from . import _fallback

BACKEND = "python"
gauss_fill = _fallback.gauss_fill

if not os.environ.get("FLORA_PURE_PYTHON"):
    try:
        from ._kernels import gauss_fill  # noqa: F401,F811

        BACKEND = "cython"
    except ImportError:
        pass
