"""Layered asymptotic approximations for a singularly perturbed Neumann
problem concentrating on a curve, with desk-scale verification of every
construction step: 1D layer profiles, modified Fermi charts, weighted
geodesic tests, correction layers with interior/boundary residual orders,
reduced spectral solvers with the resonance ledger, and a full 2D Newton
validation."""

from . import ansatz, geodesic, geometry, harness, pde, profiles, reduced, scenarios, strip, util

__all__ = [
    "ansatz",
    "geodesic",
    "geometry",
    "harness",
    "pde",
    "profiles",
    "reduced",
    "scenarios",
    "strip",
    "util",
]

__version__ = "0.1.0"
