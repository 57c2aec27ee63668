"""Select the compiled pair-integral core, falling back to numpy.

Set ``EFIEPC_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _kernels_py

python_backend = _kernels_py

if os.environ.get("EFIEPC_PURE_PYTHON", "") not in ("", "0"):
    compiled_backend = None
else:
    try:
        from . import _kernels as compiled_backend
    except ImportError:  # extension not built
        compiled_backend = None

kernels = compiled_backend if compiled_backend is not None else python_backend
BACKEND = "compiled" if compiled_backend is not None else "python"


def get(name=None):
    """Return the backend module called `name` (``compiled``/``python``)."""
    if name is None:
        return kernels
    if name == "python":
        return python_backend
    if name == "compiled":
        if compiled_backend is None:
            raise ImportError("compiled kernel extension is not available")
        return compiled_backend
    raise ValueError(f"unknown backend {name!r}")
