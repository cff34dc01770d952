"""Backend selection for the hot kernels.

The compiled extension is preferred when importable; the pure-python
module is the fallback. CRDW_BACKEND=python or =native forces a choice
(forcing native without the built extension raises at import).
"""

import importlib as _importlib
import os as _os

from . import pykernels as _py

_requested = _os.environ.get("CRDW_BACKEND", "").strip().lower()
# note: `from . import _native` would silently pick up a pre-bound module
# attribute instead of importing, so go through importlib explicitly
_native = None
if _requested in ("", "native"):
    try:
        _native = _importlib.import_module("._native", __name__)
    except ImportError:
        _native = None
        if _requested == "native":
            raise ImportError(
                "CRDW_BACKEND=native but the compiled extension is not built"
            )
elif _requested != "python":
    raise ImportError(f"unknown CRDW_BACKEND value {_requested!r}")

if _native is not None:
    BACKEND = "native"
    sim_loop = _native.sim_loop
    crdw_barrier = _native.crdw_barrier
else:
    BACKEND = "python"
    sim_loop = _py.sim_loop
    crdw_barrier = _py.crdw_barrier


def backend_name():
    return BACKEND
