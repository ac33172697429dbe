"""Backend selection for the hot kernels.

The compiled Cython module is used when it was built and importable;
otherwise the numpy fallback is used. Setting ``IMBALBENCH_PURE_PYTHON=1``
forces the fallback.
"""

import importlib
import os

from . import _pykernels

KERNEL_NAMES = ("softmax_rows", "loss_grad", "rotate_nearest",
                "confusion_counts", "paired_cosine")


def _load_compiled():
    try:
        return importlib.import_module("imbalbench._ckernels")
    except ImportError:
        return None


_compiled = _load_compiled()

if _compiled is not None and os.environ.get("IMBALBENCH_PURE_PYTHON", "") in ("", "0"):
    _impl = _compiled
    BACKEND = "cython"
else:
    _impl = _pykernels
    BACKEND = "python"


def available_backends():
    return ["cython", "python"] if _compiled is not None else ["python"]


def get_backend(name):
    """Return the kernel module for ``name`` ('cython' or 'python')."""
    if name == "python":
        return _pykernels
    if name == "cython":
        if _compiled is None:
            raise ImportError("compiled kernels are not built; "
                              "run `pip install -e . --no-build-isolation`")
        return _compiled
    raise ValueError(f"unknown kernel backend {name!r}")


softmax_rows = _impl.softmax_rows
loss_grad = _impl.loss_grad
rotate_nearest = _impl.rotate_nearest
confusion_counts = _impl.confusion_counts
paired_cosine = _impl.paired_cosine
