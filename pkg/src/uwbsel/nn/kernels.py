"""Backend selection for the convolution kernels.

The compiled extension is used when it was built; otherwise the numpy
fallback.  ``UWBSEL_KERNELS=python`` forces the fallback at import, and
:func:`use` switches at runtime (tests and the benchmark do this).
"""
from __future__ import annotations

import os

from . import _kernels_py

python_backend = _kernels_py

try:
    from . import _conv_ext as compiled_backend  # type: ignore[attr-defined]
except ImportError:  # extension not built
    compiled_backend = None

BACKEND = "python"
conv1d_forward = python_backend.conv1d_forward
conv1d_backward = python_backend.conv1d_backward


def available() -> list[str]:
    return ["python"] + (["compiled"] if compiled_backend is not None else [])


def use(name: str) -> None:
    global BACKEND, conv1d_forward, conv1d_backward
    if name == "compiled":
        if compiled_backend is None:
            raise RuntimeError("compiled kernels are not built; reinstall the package with Cython present")
        mod = compiled_backend
    elif name == "python":
        mod = python_backend
    else:
        raise ValueError(f"unknown kernel backend {name!r}")
    BACKEND = name
    conv1d_forward = mod.conv1d_forward
    conv1d_backward = mod.conv1d_backward


if compiled_backend is not None and os.environ.get("UWBSEL_KERNELS", "").lower() != "python":
    use("compiled")
