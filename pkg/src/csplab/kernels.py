"""Backend selection for the hot kernels.

The compiled extension ``csplab._kernels`` is used when it imports; otherwise,
or when ``CSPLAB_PURE_PYTHON=1`` is set, the numpy reference implementation in
``csplab._fallback`` is used.  Both backends produce identical results.
"""

import os

from . import _fallback

BACKEND = "python"
_impl = _fallback

if os.environ.get("CSPLAB_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError:  # extension not built
        pass
    else:
        _impl = _compiled
        BACKEND = "compiled"

OK = _fallback.OK
EXHAUSTED = _fallback.EXHAUSTED
NODE_CAP = _fallback.NODE_CAP
INCONSISTENT = _fallback.INCONSISTENT

wht = _impl.wht
iwht = _impl.iwht
recursion_decide = _impl.recursion_decide
lazy_bias = _impl.lazy_bias
enumerate_binary = _impl.enumerate_binary
enumerate_colorings = _impl.enumerate_colorings


def backends():
    """Map of available backend names to kernel modules (the fallback is always present)."""
    out = {"python": _fallback}
    try:
        from . import _kernels as compiled
    except ImportError:
        return out
    out["compiled"] = compiled
    return out
