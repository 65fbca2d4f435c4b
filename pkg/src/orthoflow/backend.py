"""Kernel backend selection: numba-jitted loops or pure-numpy fallback.

The hot per-pixel kernels (axial attention, cost-volume lookup and their
backward passes) exist twice, with identical call signatures, in
``_kernels_numba`` and ``_kernels_numpy``.  Which one runs is decided by

* the ``ORTHOFLOW_NUMBA`` environment variable at import time
  (``0``/``false``/``numpy`` forces the numpy path, ``1``/``numba`` requires
  numba, unset or ``auto`` uses numba when importable), and
* :func:`set_backend`, which overrides the environment at runtime (used by
  the kernel benchmark to time both paths in one process).

Thread control only affects the numba path; kernels parallelize over output
rows with sequential per-pixel reductions, so results are bit-identical for
any thread count.
"""

from __future__ import annotations

import os

_VALID = ("auto", "numba", "numpy")

_override: str | None = None
_cached_name: str | None = None
_cached_module = None
_numba_error: str | None = None


def _env_choice() -> str:
    raw = os.environ.get("ORTHOFLOW_NUMBA", "auto").strip().lower()
    if raw in ("", "auto"):
        return "auto"
    if raw in ("1", "true", "on", "numba"):
        return "numba"
    if raw in ("0", "false", "off", "numpy"):
        return "numpy"
    raise ValueError(f"unrecognized ORTHOFLOW_NUMBA value: {raw!r}")


def _load(name: str):
    global _numba_error
    if name == "numba":
        import warnings

        # the TBB version probe warns on older system TBBs; the threading
        # layer silently falls back to OpenMP/workqueue
        warnings.filterwarnings("ignore", message=".*TBB.*")
        from . import _kernels_numba

        return _kernels_numba
    from . import _kernels_numpy

    return _kernels_numpy


def _resolve() -> str:
    choice = _override if _override is not None else _env_choice()
    if choice != "auto":
        return choice
    global _numba_error
    try:
        import numba  # noqa: F401

        return "numba"
    except ImportError as exc:  # pragma: no cover - numba is a hard dep
        _numba_error = str(exc)
        return "numpy"


def set_backend(name: str) -> None:
    """Force the kernel backend for the rest of the process.

    ``name`` is one of ``"numba"``, ``"numpy"`` or ``"auto"``.
    """
    global _override, _cached_name, _cached_module
    if name not in _VALID:
        raise ValueError(f"backend must be one of {_VALID}, got {name!r}")
    _override = None if name == "auto" else name
    _cached_name = None
    _cached_module = None


def active_backend() -> str:
    """Name of the backend that :func:`kernels` will return."""
    return _resolve()


def kernels():
    """Return the active kernel module (numba or numpy implementation)."""
    global _cached_name, _cached_module
    name = _resolve()
    if name != _cached_name:
        _cached_module = _load(name)
        _cached_name = name
    return _cached_module


def set_threads(count: int) -> int:
    """Set the worker-thread count for numba kernels.

    Returns the thread count actually in effect.  A no-op (returning 1) on
    the numpy backend, which is single-threaded at this level.
    """
    if count < 1:
        raise ValueError("thread count must be >= 1")
    if _resolve() != "numba":
        return 1
    import numba

    capped = min(count, numba.config.NUMBA_NUM_THREADS)
    numba.set_num_threads(capped)
    return capped


def thread_count() -> int:
    """Current worker-thread count of the active backend."""
    if _resolve() != "numba":
        return 1
    import numba

    return numba.get_num_threads()
