"""Kernel backend selection.

The compiled backend (``cvxpref._ckernels``) is used when it was built;
otherwise the numpy backend is used. Set ``CVXPREF_KERNELS=python`` to force
the numpy backend. Callers must go through this module's attributes
(``kernels.f_apply(...)``) so that :func:`set_backend` takes effect.
"""

from __future__ import annotations

import contextlib
import importlib
import os

_NAMES = (
    "f_apply",
    "f_adjoint",
    "g_apply",
    "g_adjoint",
    "normal_apply",
    "normal_pcg",
    "group_shrink",
    "logistic_loss_grad",
)

_MODULES = {"cython": "cvxpref._ckernels", "python": "cvxpref._kernels_py"}


def available_backends() -> list[str]:
    found = []
    for name, mod in _MODULES.items():
        try:
            importlib.import_module(mod)
        except ImportError:
            continue
        found.append(name)
    return found


def load_backend(name: str):
    """Return the kernel module for ``name`` (``"cython"`` or ``"python"``)."""
    if name not in _MODULES:
        raise ValueError(f"unknown kernel backend {name!r}")
    return importlib.import_module(_MODULES[name])


def set_backend(name: str) -> None:
    global BACKEND
    mod = load_backend(name)
    g = globals()
    for attr in _NAMES:
        g[attr] = getattr(mod, attr)
    BACKEND = mod.name


@contextlib.contextmanager
def use_backend(name: str):
    previous = BACKEND
    set_backend(name)
    try:
        yield
    finally:
        set_backend(previous)


def _default_backend() -> str:
    forced = os.environ.get("CVXPREF_KERNELS")
    if forced:
        return forced
    return "cython" if "cython" in available_backends() else "python"


BACKEND = "python"
set_backend(_default_backend())
