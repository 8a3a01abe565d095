"""Numerical laboratory for theta-spin relaxation, lapse-symmetry breaking and
stochastic-time decoherence.

Subpackages
-----------
geometry
    Spinor lapse/shift maps, magnetization, coherence-domain criterion.
theta
    Long-range theta-spin N-body simulator and Lynden-Bell statistics.
trps
    Ground-state pair distributions, lapse potential, reparametrization tests.
qdynamics
    Stochastic-time Schrodinger evolution and event reading.
harness
    Configuration, scenarios and plot data for the ``trps-lab`` CLI.
"""

from .errors import FitFailure, InvalidInputError, TrpsLabError

__version__ = "0.1.0"

__all__ = ["FitFailure", "InvalidInputError", "TrpsLabError", "__version__"]
