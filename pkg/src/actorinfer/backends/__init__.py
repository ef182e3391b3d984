"""Kernel backend selection.

Two interchangeable implementations of the numerical kernels exist:

* ``_core``         Cython extension (preferred, ~1-2 orders faster)
* ``numpy_backend`` pure NumPy reference

The compiled backend is used when importable.  Set the environment
variable ``ACTORINFER_BACKEND`` to ``numpy`` or ``cython`` to force a
choice; forcing ``cython`` when the extension is missing raises.

Both backends compute the same quantities from the same inputs; results
agree to floating-point roundoff (not bit-exactly, as summation orders
differ).  Artifacts record which backend produced them.
"""

import os

from . import numpy_backend

_FORCED = os.environ.get("ACTORINFER_BACKEND", "").strip().lower()

_KERNELS = ("net_forward", "net_forward_input_grad", "net_loss_weight_grad", "log_joint_grad")

try:
    from . import _core  # type: ignore[attr-defined]

    _HAVE_CORE = all(hasattr(_core, k) for k in _KERNELS)
except ImportError:
    _core = None
    _HAVE_CORE = False

if _FORCED in ("", "auto"):
    active = _core if _HAVE_CORE else numpy_backend
elif _FORCED == "numpy":
    active = numpy_backend
elif _FORCED in ("cython", "core", "compiled"):
    if not _HAVE_CORE:
        raise ImportError(
            "ACTORINFER_BACKEND requested the compiled backend but "
            "actorinfer.backends._core is not built"
        )
    active = _core
else:
    raise ImportError(f"unknown ACTORINFER_BACKEND value {_FORCED!r}")


def backend_name() -> str:
    return active.NAME


def available_backends():
    out = [numpy_backend]
    if _HAVE_CORE:
        out.append(_core)
    return out
