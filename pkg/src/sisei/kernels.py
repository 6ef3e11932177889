"""Backend selection for the radial element kernels.

The compiled Cython extension ``sisei._ckernels`` is used when it can be
imported; otherwise the numpy implementation in :mod:`sisei._pykernels` is
used.  Set ``SISEI_BACKEND=python`` (or ``cython``) to force a choice.
"""
import os

from . import _pykernels as python_backend

try:
    from . import _ckernels as compiled_backend
except ImportError:  # extension not built
    compiled_backend = None


def available_backends():
    names = ["python"]
    if compiled_backend is not None:
        names.insert(0, "cython")
    return names


def get_backend(name=None):
    """Return the kernel module called ``name`` (``None``/"auto" picks the fastest)."""
    if name in (None, "auto"):
        return compiled_backend if compiled_backend is not None else python_backend
    if name == "python":
        return python_backend
    if name == "cython":
        if compiled_backend is None:
            raise ImportError("compiled kernels are not built; run `pip install -e .`")
        return compiled_backend
    raise ValueError(f"unknown kernel backend {name!r}")


active = get_backend(os.environ.get("SISEI_BACKEND", "auto"))
