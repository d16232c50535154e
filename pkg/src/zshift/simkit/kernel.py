"""Kernel selection: compiled extension if importable, pure Python otherwise.

Set ``ZSHIFT_PURE_PYTHON=1`` to force the fallback.
"""
import os

import numpy as np

from . import _kernel_py

RK4 = _kernel_py.RK4
TRAPEZOIDAL = _kernel_py.TRAPEZOIDAL

try:
    if os.environ.get("ZSHIFT_PURE_PYTHON", "") not in ("", "0"):
        raise ImportError("pure Python requested")
    from . import _kernel_c as _compiled
except ImportError:
    _compiled = None

BACKENDS = {"python": _kernel_py}
if _compiled is not None:
    BACKENDS["cython"] = _compiled
BACKEND = "cython" if _compiled is not None else "python"


def get(name: str | None = None):
    name = name or BACKEND
    try:
        return BACKENDS[name]
    except KeyError:
        raise ValueError(f"kernel backend {name!r} unavailable; have {sorted(BACKENDS)}") from None


def run(model, x, t0, dt, n_steps, inj, method=RK4, w=None, record=True, backend=None):
    """Advance ``x`` (modified in place) and return the interface outputs.

    Returns an ``(n_steps, 4)`` array of ``[v_d, v_q, i_d, i_q]`` sampled at the
    start of every step, or an empty one when ``record`` is false.
    """
    impl = get(backend)
    out = np.zeros((n_steps if record else 0, 4))
    if w is None:
        w = np.zeros((0, 0))
    impl.run(x, float(t0), float(dt), int(n_steps), np.ascontiguousarray(inj, dtype=float),
             model.glob, np.ascontiguousarray(model.minv), np.ascontiguousarray(model.rmat),
             np.ascontiguousarray(model.units), int(method), np.ascontiguousarray(w), out)
    return out
