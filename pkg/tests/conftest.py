"""Shared fixtures: expensive artifacts computed once per session."""

import numpy as np
import pytest

from drivenatom import IntegratorSettings, SystemConfig
from drivenatom import invcurves, manifolds, porbits


@pytest.fixture(scope="session")
def settings():
    return IntegratorSettings()


@pytest.fixture(scope="session")
def cfg1():
    return SystemConfig(d=1)


@pytest.fixture(scope="session")
def cfg2():
    return SystemConfig(d=2)


@pytest.fixture(scope="session")
def orbit_o2_d1(cfg1, settings):
    return porbits.find_known_orbit(cfg1, settings, "O2")


@pytest.fixture(scope="session")
def orbit_o2_d2(cfg2, settings):
    return porbits.find_known_orbit(cfg2, settings, "O2")


@pytest.fixture(scope="session")
def first_curve(cfg2, settings, orbit_o2_d2):
    """Smallest member of the invariant-curve family around the d=2 O2 point."""
    guess = invcurves.initial_curve_guess(orbit_o2_d2, h=1e-2, M=8)
    constraint = invcurves.ContinuationConstraint(kind="first", delta=1e-2)
    return invcurves.solve_curve(
        cfg2, settings, guess, orbit_o2_d2.z_star.z, constraint)


@pytest.fixture(scope="session")
def first_stability(cfg2, settings, first_curve):
    return invcurves.curve_stability(cfg2, settings, first_curve)


@pytest.fixture(scope="session")
def stable_domain(cfg2, settings, first_curve, first_stability):
    return manifolds.find_fundamental_domain(
        cfg2, settings, first_curve, first_stability, "stable")


@pytest.fixture(scope="session")
def unstable_domain(cfg2, settings, first_curve, first_stability):
    return manifolds.find_fundamental_domain(
        cfg2, settings, first_curve, first_stability, "unstable")


@pytest.fixture(scope="session")
def slice_cuts(cfg2, settings, first_curve, first_stability,
               stable_domain, unstable_domain):
    """Slice intersections of both manifold branches of the first curve."""
    out = {}
    for side, dom in (("stable", stable_domain), ("unstable", unstable_domain)):
        out[side] = manifolds.intersect_slice(
            cfg2, settings, first_curve, first_stability, dom,
            n_map=10, n_s=4, n_theta=24)
    return out
