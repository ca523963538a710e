"""Invariant phase-space structures of a laser-driven soft-Coulomb atom.

The package is organized in layers: ``model`` (Hamiltonian and derivatives),
``flow`` (high-order integration, tangent maps, stroboscopic map), ``porbits``
(fixed points of the period map and their 1D manifolds), ``invcurves``
(Fourier-parameterized invariant curves and their continuation), ``manifolds``
(fundamental domains, globalization, slice intersections), ``atlas``
(ionization-distance maps) and ``cli`` (artifact-producing command line).
All quantities are in atomic units.
"""

__version__ = "0.1.0"

from . import atlas, flow, invcurves, manifolds, model, porbits
from .atlas import AxisSpec, DistanceGrid, GridSpec, scan
from .flow import (
    IntegrationError,
    IntegratorSettings,
    MapResult,
    Trajectory,
    integrate,
    map_points,
    stroboscopic_map,
)
from .invcurves import (
    ContinuationConstraint,
    CurveFamily,
    CurveStability,
    InvariantCurve,
    continue_family,
    curve_stability,
    solve_curve,
)
from .manifolds import FundamentalDomain, ManifoldSide, SliceIntersection
from .model import ConfigurationError, PhaseState, PolarState3D, SystemConfig
from .porbits import FixedPointOrbit, find_fixed_point, find_known_orbit

__all__ = [
    "AxisSpec",
    "ConfigurationError",
    "ContinuationConstraint",
    "CurveFamily",
    "CurveStability",
    "DistanceGrid",
    "FixedPointOrbit",
    "FundamentalDomain",
    "GridSpec",
    "IntegrationError",
    "IntegratorSettings",
    "InvariantCurve",
    "ManifoldSide",
    "MapResult",
    "PhaseState",
    "PolarState3D",
    "SliceIntersection",
    "SystemConfig",
    "Trajectory",
    "__version__",
    "atlas",
    "continue_family",
    "curve_stability",
    "find_fixed_point",
    "find_known_orbit",
    "flow",
    "integrate",
    "invcurves",
    "manifolds",
    "map_points",
    "model",
    "porbits",
    "scan",
    "solve_curve",
    "stroboscopic_map",
]
