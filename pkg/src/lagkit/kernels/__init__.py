"""Activation-stage kernels with a compiled core and a numpy fallback.

At import time the Cython extension ``lagkit.kernels._fast`` is preferred;
if it was not built (or ``LAGKIT_PURE_PYTHON=1`` is set) the pure-numpy
implementation is used instead.  Both expose the same functions and produce
the same results to floating-point roundoff; ``tests/test_kernels.py``
asserts the equivalence and ``benchmarks/bench_kernels.py`` compares speed.

Callers should go through the module-level names (``kernels.softplus_fwd2``
etc.) so that :func:`set_backend` takes effect everywhere.
"""

import contextlib
import os

from . import _numpy

_BACKENDS = {"numpy": _numpy}

if os.environ.get("LAGKIT_PURE_PYTHON", "") != "1":
    try:
        from . import _fast

        _BACKENDS["cython"] = _fast
    except ImportError:
        pass

_active = _BACKENDS.get("cython", _numpy)

# ReLU control kernels are numpy-only.
relu_fwd1 = _numpy.relu_fwd1
relu_bwd1 = _numpy.relu_bwd1
relu_fwd2 = _numpy.relu_fwd2
relu_bwd2 = _numpy.relu_bwd2


def available_backends():
    return sorted(_BACKENDS)


def backend_name():
    return "cython" if _active is _BACKENDS.get("cython") else "numpy"


def set_backend(name):
    """Select the kernel implementation by name ('numpy' or 'cython')."""
    global _active, softplus_fwd1, softplus_bwd1, softplus_fwd2, softplus_bwd2
    if name not in _BACKENDS:
        raise ValueError(f"backend {name!r} not available (have {available_backends()})")
    _active = _BACKENDS[name]
    softplus_fwd1 = _active.softplus_fwd1
    softplus_bwd1 = _active.softplus_bwd1
    softplus_fwd2 = _active.softplus_fwd2
    softplus_bwd2 = _active.softplus_bwd2


@contextlib.contextmanager
def use_backend(name):
    previous = backend_name()
    set_backend(name)
    try:
        yield
    finally:
        set_backend(previous)


set_backend(backend_name())
