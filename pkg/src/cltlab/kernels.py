"""Kernel backend selection.

The compiled extension ``cltlab._kernels`` is used when it imports; otherwise
the numpy implementations in ``cltlab._fallback`` take over. Setting
``CLTLAB_PURE_PYTHON=1`` forces the fallback, and :func:`use_backend` switches
at runtime (the benchmark and the equivalence tests rely on it).
"""

import os

import numpy as np

from cltlab import _fallback

try:
    from cltlab import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

_BACKENDS = {"python": _fallback}
if _compiled is not None:
    _BACKENDS["compiled"] = _compiled

_active = _fallback if os.environ.get("CLTLAB_PURE_PYTHON") or _compiled is None else _compiled


def available_backends():
    return sorted(_BACKENDS)


def backend_name():
    return "compiled" if _active is _compiled and _compiled is not None else "python"


def use_backend(name):
    """Select ``"compiled"`` or ``"python"``; returns the previous name."""
    global _active
    if name not in _BACKENDS:
        raise ValueError(f"backend {name!r} unavailable; have {available_backends()}")
    previous = backend_name()
    _active = _BACKENDS[name]
    return previous


def _f64(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def doubling_orbit(words, length):
    return _active.doubling_orbit(np.ascontiguousarray(words, dtype=np.uint64), int(length))


def toral_orbit(x, y, a, b, c, d, length):
    x = np.ascontiguousarray(x, dtype=np.uint64)
    y = np.ascontiguousarray(y, dtype=np.uint64)
    return _active.toral_orbit(x, y, int(a), int(b), int(c), int(d), int(length))


def trace_rays(ox, oy, dx, dy, exclude, cx, cy, rad, cap):
    return _active.trace_rays(_f64(ox), _f64(oy), _f64(dx), _f64(dy),
                              np.ascontiguousarray(exclude, dtype=np.int64),
                              _f64(cx), _f64(cy), _f64(rad), float(cap))
