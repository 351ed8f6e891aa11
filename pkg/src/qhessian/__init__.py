"""Quaternionic Hessian-type equations on the flat hyperkähler torus.

Layers, bottom to top: ``quatlin`` (quaternionic linear algebra),
``cones`` (symmetric cone operators), ``torus`` (discrete fields and
derivatives), ``forms`` (exterior-algebra oracle), ``solver`` (Newton and
continuity method) and ``cli``.
"""

from . import cones, forms, quatlin, solver, torus
from .errors import QHessianError

__all__ = ["cones", "forms", "quatlin", "solver", "torus", "QHessianError"]
__version__ = "0.1.0"
