"""Hot search kernels with a compiled backend and a pure-Python fallback.

The compiled extension is used when it was built and ``CCPP_PURE_PYTHON`` is
unset; :func:`use_backend` switches at runtime (benchmarks, equivalence tests).
"""
import os

from . import _pykernels

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

_BACKENDS = {"python": _pykernels}
if _ckernels is not None:
    _BACKENDS["compiled"] = _ckernels

_active = None


def available_backends():
    return sorted(_BACKENDS)


def use_backend(name):
    """Select the kernel backend by name ("compiled" or "python")."""
    global _active
    if name not in _BACKENDS:
        raise ValueError(f"kernel backend {name!r} is not available")
    _active = name


def backend():
    return _active


def dijkstra(*args, **kwargs):
    return _BACKENDS[_active].dijkstra(*args, **kwargs)


def follower_pass(*args, **kwargs):
    return _BACKENDS[_active].follower_pass(*args, **kwargs)


def composite_search_kernel():
    """Compiled joint-state search, or None when the Python backend is active."""
    return getattr(_BACKENDS[_active], "composite_search", None)


if os.environ.get("CCPP_PURE_PYTHON") or _ckernels is None:
    use_backend("python")
else:
    use_backend("compiled")
