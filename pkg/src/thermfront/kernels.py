"""Selects the compiled trajectory kernels when available.

Set ``THERMFRONT_PURE_PYTHON=1`` to force the numpy fallback.
"""

import os

from . import _kernels_py as python_kernels

compiled_kernels = None
if not os.environ.get("THERMFRONT_PURE_PYTHON"):
    try:
        from . import _kernels as compiled_kernels
    except ImportError:  # extension not built
        compiled_kernels = None

active = compiled_kernels if compiled_kernels is not None else python_kernels
IMPLEMENTATION = active.IMPLEMENTATION

ed_modal_z = active.ed_modal_z
ed_site = active.ed_site
poly_site = active.poly_site
gaussian_modal = active.gaussian_modal
bdg_modal = active.bdg_modal


def available():
    """All importable kernel modules, compiled first."""
    mods = [python_kernels]
    if compiled_kernels is not None:
        mods.insert(0, compiled_kernels)
    return mods
