"""Kernel backend selection.

The compiled extension is used when it imports; set ``GLOVESIM_PURE=1`` to
force the numpy fallback.
"""

import os

from . import _fallback

BACKEND = "numpy"
_impl = _fallback

if os.environ.get("GLOVESIM_PURE", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        _impl = _fallback

uniforms = _impl.uniforms
draw_labels = _impl.draw_labels
trial_counts = _impl.trial_counts
exceedance_counts = _impl.exceedance_counts
l1_failures = _impl.l1_failures

__all__ = [
    "BACKEND",
    "uniforms",
    "draw_labels",
    "trial_counts",
    "exceedance_counts",
    "l1_failures",
]
