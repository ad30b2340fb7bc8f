"""Kernel backend selection: the compiled extension when built, NumPy otherwise.

Set CONTREL_KERNELS=python or CONTREL_KERNELS=compiled to force one side at
import; use force_backend() to switch temporarily inside a process (training
trajectories are chaotic, so trend-level comparisons must pin one backend).
"""

import os
from contextlib import contextmanager

from . import _kernels_py

_IMPLS = {"python": _kernels_py}
try:
    from . import _kernels_cy

    _IMPLS["compiled"] = _kernels_cy
except ImportError:
    pass

_requested = os.environ.get("CONTREL_KERNELS", "auto").strip().lower()

if _requested in ("auto", ""):
    _current = "compiled" if "compiled" in _IMPLS else "python"
elif _requested in _IMPLS:
    _current = _requested
elif _requested == "compiled":
    raise ImportError("CONTREL_KERNELS=compiled but the extension is not built")
else:
    raise RuntimeError(f"CONTREL_KERNELS must be 'python' or 'compiled', got {_requested!r}")

kernels = _IMPLS[_current]


def backend_name() -> str:
    """Which kernel implementation this process is using."""
    return _current


def available_backends() -> tuple[str, ...]:
    return tuple(sorted(_IMPLS))


@contextmanager
def force_backend(name: str):
    """Temporarily route all kernel calls through the named implementation."""
    global kernels, _current
    if name not in _IMPLS:
        raise ValueError(f"backend {name!r} not available (have {available_backends()})")
    saved, saved_name = kernels, _current
    kernels, _current = _IMPLS[name], name
    try:
        yield
    finally:
        kernels, _current = saved, saved_name
