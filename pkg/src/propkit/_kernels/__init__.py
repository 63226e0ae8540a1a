"""Hot geometry kernels with a compiled core and a pure-NumPy fallback.

The Cython extension is preferred when importable; ``PROPKIT_PURE_PYTHON=1``
forces the fallback. ``HAVE_COMPILED`` reports which one is active.
"""

import os

from . import _fallback

if os.environ.get("PROPKIT_PURE_PYTHON") == "1":
    _impl = _fallback
    HAVE_COMPILED = False
else:
    try:
        from . import _compiled as _impl  # type: ignore[no-redef]

        HAVE_COMPILED = True
    except ImportError:
        _impl = _fallback
        HAVE_COMPILED = False

cross_iou = _impl.cross_iou
nms_keep = _impl.nms_keep
window_edge_scores = _impl.window_edge_scores

__all__ = ["cross_iou", "nms_keep", "window_edge_scores", "HAVE_COMPILED"]
