"""Pick the hit-and-run kernel at import time.

The compiled extension is preferred.  Setting ``AURLAB_PURE_PYTHON=1`` forces
the pure-Python fallback (used by the benchmark and the parity tests).
"""
import os

from . import _fallback

if os.environ.get("AURLAB_PURE_PYTHON", "").strip() not in ("", "0"):
    run_chain = _fallback.run_chain
    BACKEND = "python"
else:
    try:
        from ._kernels import run_chain
        BACKEND = "cython"
    except ImportError:
        run_chain = _fallback.run_chain
        BACKEND = "python"

python_run_chain = _fallback.run_chain

try:
    from ._kernels import run_chain as compiled_run_chain
except ImportError:
    compiled_run_chain = None
