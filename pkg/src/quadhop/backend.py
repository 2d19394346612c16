"""Engine backend selection.

The compiled extension is preferred when importable; the pure-Python engine
is the fallback.  ``QUADHOP_BACKEND=python`` forces the fallback (useful for
benchmarking and debugging), ``QUADHOP_BACKEND=compiled`` makes a missing
extension an error instead of a silent slowdown.
"""

from __future__ import annotations

import os

from . import _engine_py

_FORCED = os.environ.get("QUADHOP_BACKEND", "").strip().lower()

if _FORCED == "python":
    _impl = _engine_py
else:
    try:
        from . import _engine as _impl  # type: ignore[attr-defined]
    except ImportError:
        if _FORCED == "compiled":
            raise
        _impl = _engine_py

BACKEND_NAME = "compiled" if getattr(_impl, "COMPILED", False) else "python"


def engine():
    """The active engine module."""
    return _impl


def python_engine():
    """The pure-Python engine, always available."""
    return _engine_py
