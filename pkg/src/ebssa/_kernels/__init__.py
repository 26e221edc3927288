"""Kernel backend selection.

The compiled Cython core is preferred when present; the pure-Python mirror
is the fallback. EBSSA_BACKEND=python|compiled forces a choice (compiled
raises if the extension is missing). Both backends are bit-identical.
"""

import os

_requested = os.environ.get("EBSSA_BACKEND", "auto")
if _requested not in ("auto", "compiled", "python"):
    raise RuntimeError(f"EBSSA_BACKEND must be auto|compiled|python, got {_requested!r}")

if _requested in ("auto", "compiled"):
    try:
        from . import _core as _impl
        BACKEND = "compiled"
    except ImportError:
        if _requested == "compiled":
            raise
        from . import _fallback as _impl
        BACKEND = "python"
else:
    from . import _fallback as _impl
    BACKEND = "python"

detect_events = _impl.detect_events
surface_pass_mask = _impl.surface_pass_mask
track_events = _impl.track_events

__all__ = ["BACKEND", "detect_events", "surface_pass_mask", "track_events"]
