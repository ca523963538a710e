"""Fixed-point layer tests: Newton solver, shipped orbit set, 1D manifolds."""

import numpy as np
import pytest

from drivenatom import IntegratorSettings, PhaseState, SystemConfig
from drivenatom import flow, porbits
from drivenatom.model import ConfigurationError
from drivenatom.porbits import NewtonDivergenceError


class TestGuessCatalogue:
    def test_all_labels_present(self):
        guesses = porbits.load_guesses()
        assert set(guesses) == {"O1", "O1+", "O1-", "O2", "O2-1:9", "O", "O+-"}
        for rec in guesses.values():
            assert len(rec["z"]) == 2 * rec["d"]

    def test_unknown_label(self, cfg1, settings):
        with pytest.raises(KeyError):
            porbits.find_known_orbit(cfg1, settings, "nope")

    def test_dimension_mismatch(self, cfg1, settings):
        with pytest.raises(ConfigurationError):
            porbits.find_known_orbit(cfg1, settings, "O")  # off-axis orbit is d=2


class TestFindFixedPoint:
    def test_o2_converges(self, orbit_o2_d1):
        assert orbit_o2_d1.residual < 1e-9
        assert orbit_o2_d1.z_star.z[0] == pytest.approx(-2.436054165, abs=1e-6)
        assert abs(orbit_o2_d1.z_star.z[1]) < 1e-9

    def test_o2_spectrum(self, orbit_o2_d1):
        mags = np.sort(np.abs(orbit_o2_d1.eigenvalues))
        assert mags[1] == pytest.approx(7.746561, rel=1e-5)
        assert mags[0] * mags[1] == pytest.approx(1.0, abs=1e-6)

    def test_monodromy_determinant(self, orbit_o2_d2):
        assert np.linalg.det(orbit_o2_d2.monodromy) == pytest.approx(1.0, abs=1e-8)

    def test_perturbed_guess_converges_to_same_point(self, cfg1, settings, orbit_o2_d1):
        guess = PhaseState.from_z(orbit_o2_d1.z_star.z + np.array([5e-3, 1e-3]))
        orbit = porbits.find_fixed_point(cfg1, settings, guess)
        assert np.allclose(orbit.z_star.z, orbit_o2_d1.z_star.z, atol=1e-8)

    def test_escaping_guess_raises(self, cfg1, settings):
        with pytest.raises(NewtonDivergenceError):
            porbits.find_fixed_point(
                cfg1, settings, PhaseState(q=[0.0], p=[40.0]), escape_radius=100.0)

    def test_coulomb_free_line_reported_degenerate(self, settings):
        # without the Coulomb term every x0 with p=0 is a fixed point
        cfg = SystemConfig(d=1, coulomb_enabled=False)
        orbit = porbits.find_fixed_point(
            cfg, settings, PhaseState(q=[17.2], p=[1e-4]))
        assert orbit.degenerate

    def test_roundtrip_dict(self, orbit_o2_d1):
        back = porbits.FixedPointOrbit.from_dict(orbit_o2_d1.to_dict())
        assert np.allclose(back.z_star.z, orbit_o2_d1.z_star.z)
        assert np.allclose(back.monodromy, orbit_o2_d1.monodromy)
        assert np.allclose(
            np.sort_complex(back.eigenvalues),
            np.sort_complex(orbit_o2_d1.eigenvalues))


class TestClassification:
    def test_o2_planar_hyperbolic(self, orbit_o2_d1):
        cls = porbits.classify(orbit_o2_d1)
        assert cls.orbit_class == ("hyperbolic",)

    def test_o2_embedded_has_elliptic_transverse(self, orbit_o2_d2):
        cls = porbits.classify(orbit_o2_d2)
        assert sorted(cls.orbit_class) == ["elliptic", "hyperbolic"]

    def test_resonant_island_center_elliptic(self, cfg1, settings):
        orbit = porbits.find_known_orbit(cfg1, settings, "O2-1:9")
        cls = porbits.classify(orbit)
        assert cls.orbit_class == ("elliptic",)

    def test_pairing_is_reciprocal(self, orbit_o2_d2):
        for pair in porbits.classify(orbit_o2_d2).pairs:
            assert abs(pair.values[0] * pair.values[1] - 1.0) < 1e-6


@pytest.fixture(scope="module")
def branch(cfg1, settings, orbit_o2_d1):
    return porbits.grow_manifold_1d(
        cfg1, settings, orbit_o2_d1, orientation="unstable", sign=1,
        arclength_budget=5.0)


class TestManifold1D:
    def test_starts_at_fixed_point(self, branch, orbit_o2_d1):
        assert np.linalg.norm(branch.points[0] - orbit_o2_d1.z_star.z) < 1e-5
        assert branch.arc_params[0] == 0.0

    def test_arclength_monotonic(self, branch):
        assert np.all(np.diff(branch.arc_params) >= 0.0)
        assert branch.arc_params[-1] >= 5.0

    def test_points_lie_on_invariant_set(self, cfg1, settings, branch):
        # the image of a manifold point stays on the manifold polyline
        idx = len(branch.points) // 2
        Z, _, _ = flow.map_points(
            cfg1, settings, branch.points[idx:idx + 1], n_periods=1)
        dists = np.linalg.norm(branch.points - Z[0], axis=1)
        assert dists.min() < 0.25

    def test_invalid_arguments(self, cfg1, cfg2, settings, orbit_o2_d1, orbit_o2_d2):
        with pytest.raises(ConfigurationError):
            porbits.grow_manifold_1d(cfg2, settings, orbit_o2_d2)
        with pytest.raises(ConfigurationError):
            porbits.grow_manifold_1d(cfg1, settings, orbit_o2_d1, orientation="middle")
        with pytest.raises(ConfigurationError):
            porbits.grow_manifold_1d(cfg1, settings, orbit_o2_d1, sign=0)

    def test_elliptic_point_has_no_unstable_direction(self, cfg1, settings):
        orbit = porbits.find_known_orbit(cfg1, settings, "O2-1:9")
        with pytest.raises(ConfigurationError):
            porbits.grow_manifold_1d(cfg1, settings, orbit, orientation="unstable")
