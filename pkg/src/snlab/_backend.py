"""Selects compiled stepping kernels when available, numpy fallbacks otherwise.

Set SNLAB_FORCE_PYTHON=1 to insist on the fallbacks (used by the benchmark
and by tests that compare both paths).
"""

from __future__ import annotations

import os

from . import _kernels_py

if os.environ.get("SNLAB_FORCE_PYTHON") == "1":
    _impl = _kernels_py
    USING_COMPILED = False
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]

        USING_COMPILED = True
    except ImportError:
        _impl = _kernels_py
        USING_COMPILED = False

cn_kinetic_step = _impl.cn_kinetic_step


def backend_name() -> str:
    return "compiled" if USING_COMPILED else "python"
