"""Kernel dispatch: compiled ``_core`` when importable, else ``_core_py``.

Set ``DESING_PURE=1`` to force the pure-Python path.
"""
import os

import numpy as np

from . import _core_py

BACKEND = "python"
_impl = _core_py
if not os.environ.get("DESING_PURE"):
    try:
        from . import _core as _impl  # noqa: F811

        BACKEND = "compiled"
    except ImportError:
        _impl = _core_py


def use_backend(name):
    """Switch backends at runtime (``"compiled"`` or ``"python"``)."""
    global _impl, BACKEND
    if name == "python":
        _impl, BACKEND = _core_py, "python"
    elif name == "compiled":
        from . import _core

        _impl, BACKEND = _core, "compiled"
    else:
        raise ValueError(name)


def floyd_warshall(d):
    return _impl.floyd_warshall(np.ascontiguousarray(d, dtype=np.float64))


def correspondence_distortion(da, db, ra, rb):
    return _impl.correspondence_distortion(
        np.ascontiguousarray(da, dtype=np.float64), np.ascontiguousarray(db, dtype=np.float64),
        np.ascontiguousarray(ra, dtype=np.int_), np.ascontiguousarray(rb, dtype=np.int_))


def pair_distortion(da, db, ra, rb, a, b):
    return _impl.pair_distortion(
        np.ascontiguousarray(da, dtype=np.float64), np.ascontiguousarray(db, dtype=np.float64),
        np.ascontiguousarray(ra, dtype=np.int_), np.ascontiguousarray(rb, dtype=np.int_),
        int(a), int(b))


def correspondence_feasible(da, db, delta):
    return _impl.correspondence_feasible(
        np.ascontiguousarray(da, dtype=np.float64), np.ascontiguousarray(db, dtype=np.float64),
        float(delta))
