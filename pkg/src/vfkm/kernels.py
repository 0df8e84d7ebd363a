"""Backend selection for the per-segment kernels.

The compiled ``_ckernels`` extension is used when it was built; otherwise the
numpy fallback in ``_pykernels``. Set ``VFKM_BACKEND=python`` to force the
fallback.
"""
import os

from vfkm import _pykernels

python_backend = _pykernels

try:
    from vfkm import _ckernels as compiled_backend
except ImportError:
    compiled_backend = None

if compiled_backend is not None and os.environ.get("VFKM_BACKEND", "").lower() != "python":
    _impl = compiled_backend
    BACKEND = "cython"
else:
    _impl = _pykernels
    BACKEND = "python"

tessellate = _impl.tessellate
segment_errors = _impl.segment_errors
accumulate_system = _impl.accumulate_system

__all__ = [
    "BACKEND",
    "accumulate_system",
    "compiled_backend",
    "python_backend",
    "segment_errors",
    "tessellate",
]
