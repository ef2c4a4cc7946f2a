"""Kernel backend selection: compiled extension when built, else pure Python.

Set ``BIKEREC_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _kernels_py as python_backend

compiled_backend = None
if not os.environ.get("BIKEREC_PURE_PYTHON"):
    try:
        from . import _kernels as compiled_backend
    except ImportError:  # extension not built
        compiled_backend = None

active = compiled_backend or python_backend
BACKEND = active.BACKEND
rhs = active.rhs
evolve = active.evolve
evolve_average = active.evolve_average
point_mass_probs = active.point_mass_probs
arrival_impacts = active.arrival_impacts


def backends():
    """All importable backends, compiled first."""
    return [b for b in (compiled_backend, python_backend) if b is not None]
