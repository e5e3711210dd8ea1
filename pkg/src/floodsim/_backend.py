"""Engine selection: compiled kernel when available, pure Python otherwise.

Set ``FLOODSIM_BACKEND=python`` or ``FLOODSIM_BACKEND=compiled`` to force a
choice; forcing the compiled kernel when it failed to build is an error.
Both engines are draw-for-draw equivalent, so the choice affects speed only.
"""

from __future__ import annotations

import os

from . import _engine_py

try:
    from . import _kernel as _kernel_mod
except ImportError:  # extension not built; pure Python still works
    _kernel_mod = None

_forced = os.environ.get("FLOODSIM_BACKEND", "").strip().lower()
if _forced and _forced not in ("python", "compiled"):
    raise RuntimeError(
        f"FLOODSIM_BACKEND must be 'python' or 'compiled', got {_forced!r}"
    )
if _forced == "compiled" and _kernel_mod is None:
    raise RuntimeError(
        "FLOODSIM_BACKEND=compiled but the compiled kernel is not installed"
    )

if _forced == "python" or _kernel_mod is None:
    _active = _engine_py
else:
    _active = _kernel_mod

BACKEND_NAME: str = _active.BACKEND_NAME

POLICY_RW = _engine_py.POLICY_RW
POLICY_WAYPOINT = _engine_py.POLICY_WAYPOINT
POLICY_LEVY = _engine_py.POLICY_LEVY

run_grid_realization = _active.run_grid_realization


def kernel():
    """The active compiled kernel module, or None when running pure Python."""
    return _active if _active is _kernel_mod and _kernel_mod is not None else None


def kernel_module():
    """The compiled kernel module if built, regardless of the active choice."""
    return _kernel_mod
