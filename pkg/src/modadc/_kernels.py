"""Backend selection for the per-sample kernels.

The compiled extension is used when importable.  Set ``MODADC_PURE_PYTHON=1``
to force the numpy fallback.
"""
import os

BACKEND = "python"
if os.environ.get("MODADC_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = None
else:
    _impl = None

if _impl is None:
    from . import _pykernels as _impl

_NAMES = ("unfold", "lms_push", "push", "ew_cov_update", "lll_gram")


def _bind(impl):
    globals().update({name: getattr(impl, name) for name in _NAMES})


_bind(_impl)


def get_backend(name):
    """Return the kernel module for ``"python"`` or ``"cython"``."""
    if name == "python":
        from . import _pykernels

        return _pykernels
    if name == "cython":
        from . import _ckernels

        return _ckernels
    raise ValueError(f"unknown backend {name!r}")


def set_backend(name):
    """Switch every caller to the named backend at runtime (benchmarks, tests)."""
    global BACKEND
    _bind(get_backend(name))
    BACKEND = name
