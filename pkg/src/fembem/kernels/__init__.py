"""Backend selection for the dense-assembly hot loops.

Set ``FEMBEM_KERNEL=numpy`` to force the pure-numpy fallback, or
``FEMBEM_KERNEL=numba`` to require the compiled backend.  By default the
numba backend is used when importable and numpy otherwise.  Both expose
the same functions and produce matching results (up to rounding order);
``benchmarks/bench_kernels.py`` compares their throughput.
"""

import os

_requested = os.environ.get("FEMBEM_KERNEL", "").strip().lower()
if _requested not in ("", "numba", "numpy"):
    raise RuntimeError(
        f"FEMBEM_KERNEL must be 'numba' or 'numpy', got {_requested!r}")

if _requested == "numpy":
    from . import _numpy as _impl
    _backend = "numpy"
else:
    try:
        from . import _numba as _impl
        _backend = "numba"
    except ImportError:
        if _requested == "numba":
            raise
        from . import _numpy as _impl
        _backend = "numpy"

galerkin_fill = _impl.galerkin_fill
pair_fill = _impl.pair_fill
singular_fill = _impl.singular_fill
potential_fill = _impl.potential_fill


def active_backend() -> str:
    """Name of the kernel backend selected at import time."""
    return _backend


def load_backend(name: str):
    """Import a specific backend module (used by tests and benchmarks)."""
    if name == "numpy":
        from . import _numpy
        return _numpy
    if name == "numba":
        from . import _numba
        return _numba
    raise ValueError(f"unknown backend {name!r}")
