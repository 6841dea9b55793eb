"""Kernel backend selection: compiled extension if built, pure Python otherwise.

Both backends implement the identical algorithm with identical pivot rules;
outputs are bit-for-bit equal (covered by tests).  The compiled kernel is an
accelerator only — nothing depends on it being present.
"""

from otlab._kernels import reference

try:
    from otlab._kernels import _compiled

    HAVE_COMPILED = True
except ImportError:
    _compiled = None
    HAVE_COMPILED = False

_active = _compiled if HAVE_COMPILED else reference

ns_solve = _active.ns_solve


def backend_name() -> str:
    """Name of the kernel backend selected at import time."""
    return "compiled" if HAVE_COMPILED else "python"


def available_backends() -> tuple[str, ...]:
    return ("python", "compiled") if HAVE_COMPILED else ("python",)


def get_kernel(name: str = "auto"):
    """Fetch a specific backend's ns_solve (for benchmarks and equivalence tests)."""
    if name == "auto":
        return _active.ns_solve
    if name == "python":
        return reference.ns_solve
    if name == "compiled":
        if not HAVE_COMPILED:
            raise ImportError("compiled kernel is not built; reinstall with a C compiler")
        return _compiled.ns_solve
    raise ValueError(f"unknown backend {name!r} (expected auto|python|compiled)")
