"""Backend selection: compiled core when available, numpy fallback otherwise.

WLMC_BACKEND=python or WLMC_BACKEND=cython forces a choice; forcing cython
when the extension is missing raises immediately rather than silently
downgrading.
"""

from __future__ import annotations

import os

from . import _corepy

_FORCED = os.environ.get("WLMC_BACKEND", "").strip().lower()

if _FORCED == "python":
    active = _corepy
elif _FORCED == "cython":
    from . import _core as active  # noqa: F401  (ImportError is the contract)
elif _FORCED == "":
    try:
        from . import _core as active
    except ImportError:
        active = _corepy
else:
    raise RuntimeError(
        f"WLMC_BACKEND={_FORCED!r} not recognised (use 'cython' or 'python')"
    )


def backend_name() -> str:
    return active.BACKEND_NAME


def get_backend(name: str | None = None):
    """Return a backend module by name, or the active one."""
    if name is None:
        return active
    name = name.lower()
    if name == "python":
        return _corepy
    if name == "cython":
        from . import _core

        return _core
    raise ValueError(f"unknown backend {name!r}")
