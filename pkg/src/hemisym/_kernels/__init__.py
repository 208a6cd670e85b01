"""Hot kernels: compiled (Cython) when the extension is built, numpy otherwise.

The backend is chosen once at import.  ``use_backend`` switches it at runtime,
which the benchmarks and the cross-backend tests rely on.
"""
from . import _pykernels

_NAMES = ("snake_descent", "snake_energy", "smo_solve", "fill_polygon")

try:
    from . import _ckernels as _compiled
except ImportError:  # extension not built
    _compiled = None

COMPILED_AVAILABLE = _compiled is not None
_active = _compiled if _compiled is not None else _pykernels

RUNNING = _pykernels.RUNNING
CONVERGED = _pykernels.CONVERGED
STALLED = _pykernels.STALLED
DIVERGED = _pykernels.DIVERGED


def backend() -> str:
    return _active.BACKEND


def use_backend(name: str) -> str:
    """Select ``"compiled"`` or ``"python"``; returns the previous backend name."""
    global _active
    previous = _active.BACKEND
    if name == "python":
        _active = _pykernels
    elif name == "compiled":
        if _compiled is None:
            raise RuntimeError("compiled kernels are not built; run `pip install -e .`")
        _active = _compiled
    else:
        raise ValueError(f"unknown backend {name!r}")
    return previous


def __getattr__(name):
    if name in _NAMES:
        return getattr(_active, name)
    raise AttributeError(name)

