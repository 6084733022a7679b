"""Kernel backend selection.

The compiled extension is used when it imports; otherwise the numpy
fallback.  ``VFI_KERNELS=python`` forces the fallback.
"""

import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if os.environ.get("VFI_KERNELS", "").lower() != "python":
    try:
        from . import _ckernels as _impl  # noqa: F811
        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels

sample_bilinear = _impl.sample_bilinear
scatter_bilinear = _impl.scatter_bilinear
hs_relax = _impl.hs_relax

__all__ = ["BACKEND", "sample_bilinear", "scatter_bilinear", "hs_relax"]
