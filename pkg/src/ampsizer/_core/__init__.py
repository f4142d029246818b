"""Numerical backend selection for the MNA kernels.

Two interchangeable implementations exist:

* ``compiled``: the Cython extension :mod:`ampsizer._core._mnacore`;
* ``python``: the NumPy fallback :mod:`ampsizer._core._mnacore_py`.

By default the compiled one is used when importable.  Set the environment
variable ``AMPSIZER_BACKEND`` to ``compiled`` or ``python`` to force a
choice; forcing ``compiled`` when the extension is missing raises at
import time rather than silently degrading.

Reruns of any experiment on one backend are bit-reproducible.  The two
backends agree to solver tolerance but not bit-for-bit (different LU
orderings), so traces should be compared within one backend.
"""

from __future__ import annotations

import os
from types import ModuleType

from . import _mnacore_py

__all__ = ["backend", "backend_name", "available_backends", "get_backend"]


def _load_compiled():
    from . import _mnacore  # noqa: PLC0415

    return _mnacore


def available_backends() -> tuple[str, ...]:
    names = ["python"]
    try:
        _load_compiled()
    except ImportError:
        pass
    else:
        names.insert(0, "compiled")
    return tuple(names)


def get_backend(name: str) -> ModuleType:
    """Return a backend module by name ('compiled', 'python', or 'auto')."""
    key = name.strip().lower()
    if key in ("python", "py", "pure"):
        return _mnacore_py
    if key in ("compiled", "c", "ext"):
        return _load_compiled()
    if key in ("", "auto"):
        try:
            return _load_compiled()
        except ImportError:
            return _mnacore_py
    raise ValueError(f"unknown backend {name!r}; expected 'compiled', 'python', or 'auto'")


backend = get_backend(os.environ.get("AMPSIZER_BACKEND", "auto"))
backend_name: str = backend.BACKEND_NAME
