"""Backend selection for the hot kernels.

The compiled ``_speedups`` extension is used when it imports; set
``BTCNETSIM_PURE=1`` to force the interpreted fallback.
"""
import os

from . import _purepy

PURE = _purepy

try:
    if os.environ.get("BTCNETSIM_PURE", "") not in ("", "0"):
        raise ImportError("pure backend requested")
    from . import _speedups as _impl
    BACKEND = "compiled"
except ImportError:
    _impl = _purepy
    BACKEND = "python"

COMPILED = _impl if BACKEND == "compiled" else None

grind = _impl.grind
count_hits = _impl.count_hits
