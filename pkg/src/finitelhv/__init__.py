"""Simulating Werner-type quantum correlations with finite shared randomness.

Modules:

* ``geometry``: polyhedra, gamma profiles, inscribed radii, duals, convex decompositions
* ``quantum``: two-qubit states, Born statistics, partial transpose
* ``protocols``: response functions and samplers of the finite-randomness protocols
* ``localpolytope``: local-polytope membership and finite local models
* ``analysis``: two-bit bound, Platonic visibility table and figure data
* ``harness``: seeded Monte Carlo estimation; ``cli`` wraps everything
"""

from .errors import FiniteLHVError
from .geometry import Polyhedron, gamma_profile, inscribed_radius, iterate_family, make_platonic
from .quantum import DensityState, born_statistics, werner_state

__version__ = "0.1.0"

__all__ = ["FiniteLHVError", "Polyhedron", "gamma_profile", "inscribed_radius", "iterate_family",
           "make_platonic", "DensityState", "born_statistics", "werner_state", "__version__"]
