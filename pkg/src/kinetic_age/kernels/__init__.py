"""Temporal-convolution kernel backends.

The compiled Cython backend is selected at import when the extension built;
otherwise the pure-numpy fallback is used. Override with the environment
variable ``KINETIC_AGE_KERNELS=numpy|cython`` (``auto`` is the default).
Both backends implement identical semantics; ``benchmarks/bench_kernels.py``
compares their throughput.
"""

from __future__ import annotations

import importlib
import os

from . import numpy_backend

_choice = os.environ.get("KINETIC_AGE_KERNELS", "auto").lower()
if _choice not in ("auto", "numpy", "cython"):
    raise ValueError(f"KINETIC_AGE_KERNELS must be auto|numpy|cython, got {_choice!r}")

cython_backend = None
if _choice in ("auto", "cython"):
    try:
        cython_backend = importlib.import_module(".cython_backend", __name__)
    except ImportError:
        if _choice == "cython":
            raise ImportError(
                "KINETIC_AGE_KERNELS=cython but the compiled extension is not available"
            ) from None

active_backend = cython_backend if cython_backend is not None else numpy_backend

BACKEND_NAME = active_backend.NAME

temporal_conv_forward = active_backend.temporal_conv_forward
temporal_conv_backward = active_backend.temporal_conv_backward
