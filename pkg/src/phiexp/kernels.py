"""Backend selection for the flow kernels.

The compiled extension is used when it imports; otherwise the numpy
implementation takes over.  Setting ``PHIEXP_PURE_PYTHON=1`` forces the
fallback.
"""

from __future__ import annotations

import os

import numpy as np

from . import _flow_kernels_py as python_backend

compiled_backend = None
if os.environ.get("PHIEXP_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _flow_kernels as compiled_backend  # type: ignore[no-redef]
    except ImportError:  # extension not built
        compiled_backend = None

backend = compiled_backend if compiled_backend is not None else python_backend
BACKEND = "compiled" if compiled_backend is not None else "python"

OK, STIFF, NEGATIVE, MAX_STEPS = 0, 1, 2, 3


def get_backend(name: str | None = None):
    """``"compiled"``, ``"python"`` or None for the default."""
    if name is None:
        return backend
    if name == "python":
        return python_backend
    if name == "compiled":
        if compiled_backend is None:
            raise ImportError("compiled flow kernels are not available")
        return compiled_backend
    raise ValueError(f"unknown backend {name!r}")


def pack_params(params: dict) -> tuple:
    """Flatten ``DeformedLogExp.kernel_params()`` into the kernel tuple."""
    mode = int(params["mode"])
    if mode == 0:
        return (0, float(params["q"]), float(params["alpha"]), 0.0, 1.0, np.zeros(2), np.ones(2), 0.0, 0.0)
    return (
        1,
        1.0,
        float(params["alpha"]),
        float(params["u0"]),
        float(params["du"]),
        np.ascontiguousarray(params["g"], dtype=float),
        np.ascontiguousarray(params["h"], dtype=float),
        float(params["kappa_lo"]),
        float(params["kappa_hi"]),
    )
