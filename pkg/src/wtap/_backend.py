"""Kernel backend selection.

The compiled extension (wtap._kernels, Cython) is preferred when it
imported cleanly; otherwise the pure-numpy fallback is used. Both expose
the same kernel functions (secrecy_rate_raw, rate_gradient_raw,
project_feasible_raw, pg_ascent). `use()` lets tests and benchmarks pin
one backend explicitly.
"""

from contextlib import contextmanager

from . import _kernels_py

try:
    from . import _kernels  # compiled extension, built by setup.py
    HAVE_COMPILED = True
except ImportError:
    _kernels = None
    HAVE_COMPILED = False

_BACKENDS = {"python": _kernels_py}
if HAVE_COMPILED:
    _BACKENDS["compiled"] = _kernels

_active_name = "compiled" if HAVE_COMPILED else "python"


def active():
    """The currently selected kernel module."""
    return _BACKENDS[_active_name]


def name():
    return _active_name


def available():
    return tuple(sorted(_BACKENDS))


def use(which):
    """Select a backend by name; returns the previously active name."""
    global _active_name
    if which not in _BACKENDS:
        raise ValueError(f"unknown backend {which!r}; available: {available()}")
    previous = _active_name
    _active_name = which
    return previous


@contextmanager
def forced(which):
    """Context manager pinning a backend, restoring the previous one after."""
    previous = use(which)
    try:
        yield _BACKENDS[which]
    finally:
        use(previous)
