"""Kernel dispatch: the compiled extension when importable, numpy otherwise.

Set ``DEMOGUIDE_PURE_PYTHON=1`` to force the fallback. ``BACKEND`` names the
active implementation.
"""
import os

import numpy as np

from . import _kernels_py

if os.environ.get("DEMOGUIDE_PURE_PYTHON"):
    _impl = _kernels_py
else:
    try:
        from . import _kernels as _impl
    except ImportError:
        _impl = _kernels_py

BACKEND = "cython" if _impl is not _kernels_py else "python"


def _f64(x):
    return np.ascontiguousarray(x, dtype=np.float64)


def _flags(x):
    return np.ascontiguousarray(x, dtype=np.uint8)


def get_backend(name=None):
    """Return the kernel module for ``name`` ('cython' or 'python'); None gives the active one."""
    if name is None:
        return _impl
    if name == "python":
        return _kernels_py
    if name == "cython":
        from . import _kernels
        return _kernels
    raise ValueError(f"unknown kernel backend {name!r}")


def gae(rewards, values, last_value, dones, gamma, lam, impl=None):
    impl = impl or _impl
    return impl.gae(_f64(rewards), _f64(values), float(last_value), _flags(dones),
                    float(gamma), float(lam))


def discounted_returns(rewards, dones, last_value, gamma, impl=None):
    impl = impl or _impl
    return impl.discounted_returns(_f64(rewards), _flags(dones), float(last_value), float(gamma))


def assign_nearest(points, centroids, impl=None):
    impl = impl or _impl
    return impl.assign_nearest(_f64(points), _f64(centroids))


def centroid_sums(points, labels, k, impl=None):
    impl = impl or _impl
    return impl.centroid_sums(_f64(points), np.ascontiguousarray(labels, dtype=np.int64), int(k))
