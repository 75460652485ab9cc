"""Kernel selection: compiled extension when importable, pure Python otherwise.

Set ``BIPHOTON_ERASER_PURE=1`` to force the fallback. Every public function
takes ``backend=None|"python"|"cython"`` to pin an implementation explicitly.
"""
import os

import numpy as np

from . import _pykernels

BACKEND = "python"
_compiled = None
if not os.environ.get("BIPHOTON_ERASER_PURE"):
    try:
        from . import _ckernels as _compiled
        BACKEND = "cython"
    except ImportError:
        _compiled = None

POLICIES = {"closest": 0, "first": 1}


def _impl(backend):
    if backend is None:
        backend = BACKEND
    if backend == "python":
        return _pykernels
    if backend == "cython":
        if _compiled is None:
            raise ImportError("compiled kernels are not available")
        return _compiled
    raise ValueError(f"unknown backend {backend!r}")


def match_window(d0_times, idler_times, consumed, delay, window, policy="closest", lo=0,
                 backend=None):
    """Greedy window matching; see ``_pykernels.match_window``."""
    d0 = np.ascontiguousarray(d0_times, dtype=np.int64)
    idl = np.ascontiguousarray(idler_times, dtype=np.int64)
    if consumed.dtype != np.uint8 or not consumed.flags.c_contiguous:
        raise TypeError("consumed must be a contiguous uint8 array")
    return _impl(backend).match_window(d0, idl, consumed, int(delay), int(window),
                                       POLICIES[policy], int(lo))


def format_rows(event_id, detector, time_ps, x_um, backend=None) -> bytes:
    return _impl(backend).format_rows(
        np.ascontiguousarray(event_id, dtype=np.uint64),
        np.ascontiguousarray(detector, dtype=np.int8),
        np.ascontiguousarray(time_ps, dtype=np.int64),
        np.ascontiguousarray(x_um, dtype=np.int64))


def parse_rows(data: bytes, last_t: int, last_id: int, backend=None):
    impl = _impl(backend)
    if impl is _compiled:
        data = np.frombuffer(data, dtype=np.uint8) if len(data) else np.empty(0, np.uint8)
    return impl.parse_rows(data, int(last_t), int(last_id))
