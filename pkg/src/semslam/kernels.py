"""Kernel backend selection.

The compiled extension is used when it imports cleanly; otherwise the numpy
twin is used. Set ``SEMSLAM_PURE_PYTHON=1`` to force the fallback.

The two convolution gradients are matrix products in disguise; numpy hands
them to BLAS, which outruns the compiled loops (see benchmarks/), so the
compiled backend keeps the numpy versions for those two.
"""
import logging
import os
from types import SimpleNamespace

import numpy as np

from . import _kernels_py

log = logging.getLogger(__name__)

_FUNCS = ("conv_valid", "conv_valid_grad_input", "conv_valid_grad_weight", "trace_rays")
BLAS_ROUTED = ("conv_valid_grad_input", "conv_valid_grad_weight")


def _load(name):
    if name == "python":
        return _kernels_py
    if name == "compiled":
        from . import _kernels
        return _kernels
    raise ValueError(f"unknown kernel backend {name!r}")


def available_backends():
    names = ["python"]
    try:
        _load("compiled")
        names.insert(0, "compiled")
    except ImportError:
        pass
    return names


def raw_backend(name):
    """The unmodified kernel module for ``name``."""
    return _load(name)


def get_backend(name):
    """Kernel set for ``name`` ('compiled' or 'python') as used by the package."""
    mod = _load(name)
    if name == "python":
        return mod
    return SimpleNamespace(**{f: getattr(_kernels_py if f in BLAS_ROUTED else mod, f)
                              for f in _FUNCS})


if os.environ.get("SEMSLAM_PURE_PYTHON", "") not in ("", "0"):
    BACKEND = "python"
else:
    try:
        _load("compiled")
        BACKEND = "compiled"
    except ImportError:
        log.info("compiled kernels unavailable, using numpy fallback")
        BACKEND = "python"

_impl = get_backend(BACKEND)
conv_valid = _impl.conv_valid
conv_valid_grad_input = _impl.conv_valid_grad_input
conv_valid_grad_weight = _impl.conv_valid_grad_weight
trace_rays = _impl.trace_rays


def conv_valid_any(xp, w):
    """``conv_valid`` for any float dtype; non-double inputs go to the numpy kernel."""
    if xp.dtype == np.float64 and w.dtype == np.float64:
        return conv_valid(xp, w)
    return _kernels_py.conv_valid(xp, w)
