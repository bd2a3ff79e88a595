"""Backend selection for the hot kernels.

The compiled extension is preferred when importable; otherwise the numpy
fallback is used. Set ``HADALAB_PURE_PYTHON=1`` to force the fallback (used
by the benchmark and by tests that compare the two paths).
"""

import os

from . import _kernels_py

if os.environ.get("HADALAB_PURE_PYTHON") == "1":
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _accel as _impl  # type: ignore[no-redef]

        BACKEND = "compiled"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "python"

seg_add = _impl.seg_add
square_bracket = _impl.square_bracket
square_bracket_sweep = _impl.square_bracket_sweep
cross_bracket = _impl.cross_bracket


def backend_name() -> str:
    return BACKEND


def get_backend(name: str):
    """Explicit backend module, for benchmarks: 'compiled' or 'python'."""
    if name == "python":
        return _kernels_py
    if name == "compiled":
        from . import _accel

        return _accel
    raise ValueError(f"unknown backend {name!r}")
