"""Numerical certificates for multi-bubble blow-up of the Yamabe equation.

Algebraic Weyl forms, the glued metric perturbation, bubble configurations,
weighted-space certificates, reduced-energy tuning and the energy expansion.
"""

__version__ = "0.1.0"

from .weyl import HField, WeylForm, canonical_weyl
from .perturbation import Lattice, canonical_lattice, make_lattice
from .bubbles import Bubble, MultiBubble
from .scaled import ScaledQuantity

__all__ = ["__version__", "HField", "WeylForm", "canonical_weyl", "Lattice", "canonical_lattice",
           "make_lattice", "Bubble", "MultiBubble", "ScaledQuantity"]
