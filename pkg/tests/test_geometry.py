"""Tests for the reflection geometry: mirror law, cone law, conic parameters.

Derived expectations are computed by independent oracles (Householder
matrix reflection, dense ray sampling, algebraic conic fitting) rather
than by the code paths under test.
"""

import math

import numpy as np
import pytest

from oracles import fit_pattern_conic
from reflectag import geometry as geo

ALPHA = math.radians(70.0)


def reflect_via_matrix(alpha, theta, phi):
    """Independent oracle: reflection as the Householder matrix I - 2 n n^T."""
    n = np.array(
        [
            math.sin(theta) * math.cos(phi),
            math.sin(theta) * math.sin(phi),
            math.cos(theta),
        ]
    )
    a = np.array([0.0, math.sin(alpha), -math.cos(alpha)])
    return (np.eye(3) - 2.0 * np.outer(n, n)) @ a


class TestReflectRay:
    def test_top_surface_reflection_depends_only_on_alpha(self):
        """At theta = 0 the reflected ray is (0, sin a, cos a) for any phi."""
        expected = np.array([0.0, math.sin(ALPHA), math.cos(ALPHA)])
        for phi in (-1.2, -0.3, 0.0, 0.7, 1.5):
            b = geo.reflect_ray(ALPHA, 0.0, phi)
            assert np.allclose(b, expected, atol=1e-15)

    def test_known_oblique_reflection(self):
        b = geo.reflect_ray(ALPHA, math.radians(30.0), 0.0)
        assert np.allclose(b, reflect_via_matrix(ALPHA, math.radians(30.0), 0.0), atol=1e-14)
        assert np.allclose(b, [0.29620, 0.93969, 0.17101], atol=2e-5)
        assert math.isclose(np.linalg.norm(b), 1.0, abs_tol=1e-12)

    def test_matches_matrix_reflection_everywhere(self):
        rng = np.random.default_rng(11)
        for _ in range(200):
            alpha = rng.uniform(0.05, math.pi / 2 - 0.05)
            theta = rng.uniform(-math.pi / 2 + 1e-6, math.pi / 2 - 1e-6)
            phi = rng.uniform(-math.pi / 2, math.pi / 2 - 1e-9)
            assert np.allclose(
                geo.reflect_ray(alpha, theta, phi),
                reflect_via_matrix(alpha, theta, phi),
                atol=1e-13,
            )

    def test_unit_norm_preserved_in_bulk(self):
        rng = np.random.default_rng(3)
        n = 100_000
        alphas = rng.uniform(0.01, math.pi / 2 - 0.01, n)
        thetas = rng.uniform(-math.pi / 2 + 1e-9, math.pi / 2 - 1e-9, n)
        phis = rng.uniform(-math.pi / 2, math.pi / 2, n)
        # vectorised check, one alpha/phi batch at a time would be slow; use the
        # internal batch helper per unique alpha is overkill: evaluate directly
        st, ct = np.sin(thetas), np.cos(thetas)
        nvec = np.stack([st * np.cos(phis), st * np.sin(phis), ct], axis=1)
        avec = np.stack([np.zeros(n), np.sin(alphas), -np.cos(alphas)], axis=1)
        gamma = np.einsum("ij,ij->i", nvec, avec)
        bvec = avec - 2.0 * gamma[:, None] * nvec
        assert np.abs(np.linalg.norm(bvec, axis=1) - 1.0).max() < 1e-12
        # spot-check the helper agrees with the public function
        k = 517
        assert np.allclose(
            geo.reflect_ray(alphas[k], thetas[k], phis[k]), bvec[k], atol=1e-14
        )

    def test_domain_errors(self):
        with pytest.raises(ValueError):
            geo.reflect_ray(ALPHA, math.pi / 2, 0.0)
        with pytest.raises(ValueError):
            geo.reflect_ray(ALPHA, -math.pi / 2, 0.0)
        with pytest.raises(ValueError):
            geo.reflect_ray(0.0, 0.1, 0.0)
        with pytest.raises(ValueError):
            geo.reflect_ray(math.pi / 2, 0.1, 0.0)


class TestConeHalfAngle:
    def test_flat_section_angle_opens_the_cone(self):
        """phi -> pi/2 sends the half angle to pi/2 (cos phi -> 0)."""
        xi = geo.cone_half_angle(ALPHA, math.pi / 2 - 1e-9)
        assert math.isclose(xi, math.pi / 2, abs_tol=1e-8)

    def test_aligned_section_gives_complement_of_incidence(self):
        assert math.isclose(
            geo.cone_half_angle(ALPHA, 0.0), math.radians(20.0), abs_tol=1e-12
        )

    def test_against_sampled_ray_angles(self):
        """Oracle: measure the angle of 1000 reflected rays to the bead axis."""
        phi = math.radians(45.0)
        xi = geo.cone_half_angle(ALPHA, phi)
        assert math.isclose(xi, math.radians(48.3589), abs_tol=1e-4)
        thetas = np.linspace(-math.pi / 2 + 1e-6, math.pi / 2 - 1e-6, 1000)
        rays = geo._reflect_many(ALPHA, thetas, phi)
        axis = geo.cylinder_axis(phi)
        measured = np.arccos(np.clip(rays @ axis, -1.0, 1.0))
        assert np.abs(measured - xi).max() < 1e-9

    def test_cone_law_across_orientations(self):
        rng = np.random.default_rng(5)
        thetas = np.linspace(-math.pi / 2 + 1e-6, math.pi / 2 - 1e-6, 400)
        for _ in range(16):
            alpha = rng.uniform(0.1, math.pi / 2 - 0.1)
            phi = rng.uniform(-math.pi / 2 + 1e-3, math.pi / 2 - 1e-3)
            rays = geo._reflect_many(alpha, thetas, phi)
            measured = np.arccos(np.clip(rays @ geo.cylinder_axis(phi), -1.0, 1.0))
            assert np.abs(measured - geo.cone_half_angle(alpha, phi)).max() < 1e-9


class TestFixedPoint:
    def test_unit_tangent_geometry(self):
        g = geo.DetectionGeometry(alpha=math.radians(45.0), d=10.0, circle_radius=1.0)
        assert np.allclose(geo.fixed_point(g), [0.0, 10.0], atol=1e-12)

    def test_traced_ray_lands_on_it(self, rig_geometry):
        """Oracle: intersect the theta = 0 reflected ray with the plane."""
        b = geo.reflect_ray(rig_geometry.alpha, 0.0, 0.3)
        t = rig_geometry.d / b[1]
        landed = np.array([b[0] * t, b[2] * t])
        fp = geo.fixed_point(rig_geometry)
        assert np.allclose(fp, landed, atol=1e-12)
        assert math.isclose(fp[1], 23.658, abs_tol=5e-4)

    def test_every_pattern_passes_through_it(self, rig_geometry):
        rng = np.random.default_rng(64)
        fp = geo.fixed_point(rig_geometry)
        for delta in rng.uniform(0.0, math.pi, 64):
            pat = geo.sample_pattern(
                rig_geometry, geo.MicrostructureAngle.from_delta(delta), 64
            )
            assert np.linalg.norm(pat.sample_at_zero - fp) < 1e-9


class TestSamplePattern:
    def test_axis_aligned_bead_draws_the_base_circle(self, rig_geometry):
        """phi = 0: the reflected cone has a vertical axis, so the plane cut
        is the circle of radius d / tan(alpha) centred on the plane origin."""
        pat = geo.sample_pattern(
            rig_geometry, geo.MicrostructureAngle.from_phi(0.0), 512
        )
        radii = np.linalg.norm(pat.samples, axis=1)
        assert np.abs(radii - rig_geometry.d / math.tan(rig_geometry.alpha)).max() < 1e-9

    def test_focus_directrix_residual(self, rig_geometry):
        pat = geo.sample_pattern(
            rig_geometry, geo.MicrostructureAngle.from_phi(math.radians(45.0)), 512
        )
        assert geo.conic_polar_residual(pat) < 1e-6

    def test_degenerate_line_flagged(self, rig_geometry):
        pat = geo.sample_pattern(
            rig_geometry, geo.MicrostructureAngle.from_delta(0.0), 512
        )
        assert pat.degenerate
        assert pat.conic is None
        assert np.abs(pat.samples[:, 0]).max() < 1e-9  # collapses onto u = 0

    def test_mirrored_layouts_mirror_the_pattern(self, rig_geometry):
        """delta and pi - delta produce u-mirrored samples at opposite theta."""
        delta = math.radians(38.0)
        a = geo.sample_pattern(rig_geometry, geo.MicrostructureAngle.from_delta(delta), 257)
        b = geo.sample_pattern(
            rig_geometry, geo.MicrostructureAngle.from_delta(math.pi - delta), 257
        )
        # theta grids mirror exactly, so compare reversed sample order
        assert np.allclose(a.theta, -b.theta[::-1], atol=1e-12)
        mirrored = b.samples[::-1] * np.array([-1.0, 1.0])
        assert np.abs(a.samples - mirrored).max() < 1e-9

    def test_sample_count_validation(self, rig_geometry):
        with pytest.raises(ValueError):
            geo.sample_pattern(rig_geometry, geo.MicrostructureAngle.from_phi(0.2), 2)


class TestConicParams:
    def test_axis_aligned_is_a_circle(self, rig_geometry):
        c = geo.conic_params(rig_geometry, geo.MicrostructureAngle.from_phi(0.0))
        assert c.eccentricity == 0.0
        assert np.allclose(c.focus, [0.0, 0.0], atol=1e-12)

    def test_oblique_bead_formulas(self, rig_geometry):
        angle = geo.MicrostructureAngle.from_phi(math.radians(45.0))
        c = geo.conic_params(rig_geometry, angle)
        assert math.isclose(c.eccentricity, 1.0642, abs_tol=5e-5)  # hyperbolic
        assert math.isclose(c.focus[0], -31.60, abs_tol=5e-2)
        assert c.focus[1] == 0.0

    def test_fit_recovers_closed_form(self, rig_geometry):
        """Oracle: algebraic conic fit of the ray samples."""
        for phi_deg in (-60.0, -10.0, 30.0, 45.0):
            angle = geo.MicrostructureAngle.from_phi(math.radians(phi_deg))
            c = geo.conic_params(rig_geometry, angle)
            pat = geo.sample_pattern(rig_geometry, angle, 512)
            fit = fit_pattern_conic(pat.samples, window=20 * rig_geometry.d)
            assert abs(fit["eccentricity"] - c.eccentricity) <= 1e-6 * max(
                1.0, c.eccentricity
            )
            focus_err = min(np.linalg.norm(f - c.focus) for f in fit["foci"])
            assert focus_err <= 1e-6 * max(1.0, float(np.linalg.norm(c.focus)))

    def test_degeneracy_error(self, rig_geometry):
        with pytest.raises(geo.DegeneratePatternError):
            geo.conic_params(rig_geometry, geo.MicrostructureAngle.from_delta(0.0))


class TestCircleIntersection:
    def test_against_dense_sampling(self, rig_geometry):
        """Oracle: locate the crossing on a densely sampled curve."""
        fp = geo.fixed_point(rig_geometry)
        r = rig_geometry.circle_radius
        for delta_deg in (15.0, 60.0, 90.0, 140.0, 175.0):
            angle = geo.MicrostructureAngle.from_delta(math.radians(delta_deg))
            psi = geo.circle_intersection_angle(rig_geometry, angle)
            pat = geo.sample_pattern(rig_geometry, angle, 8192)
            pos = pat.samples[pat.theta > 0]
            dist = np.linalg.norm(pos - fp, axis=1)
            k = int(np.argmax(dist >= r))
            frac = (r - dist[k - 1]) / (dist[k] - dist[k - 1])
            crossing = pos[k - 1] + frac * (pos[k] - pos[k - 1])
            psi_oracle = math.atan2(crossing[1] - fp[1], crossing[0] - fp[0])
            assert abs(psi - psi_oracle) < 2e-3

    def test_axis_aligned_crossing_is_the_circle_chord(self, rig_geometry):
        """For phi = 0 the pattern is the base circle; the crossing sits at the
        chord angle -asin(r / 2R) below the u axis, not on the local tangent."""
        psi = geo.circle_intersection_angle(
            rig_geometry, geo.MicrostructureAngle.from_delta(math.pi / 2)
        )
        base_radius = rig_geometry.d / math.tan(rig_geometry.alpha)
        expected = -math.asin(rig_geometry.circle_radius / (2.0 * base_radius))
        assert math.isclose(psi, expected, abs_tol=1e-9)

    def test_mirrored_beads_give_mirrored_crossing_pairs(self, rig_geometry):
        delta = math.radians(55.0)
        both = geo.circle_intersection_angles(
            rig_geometry, geo.MicrostructureAngle.from_delta(delta)
        )
        mirrored = geo.circle_intersection_angles(
            rig_geometry, geo.MicrostructureAngle.from_delta(math.pi - delta)
        )

        def norm(a):
            return (a + math.pi) % (2 * math.pi) - math.pi

        expected = sorted(norm(math.pi - p) for p in both)
        assert np.allclose(sorted(map(norm, mirrored)), expected, atol=1e-9)

    def test_out_of_reach_circle_reports_delta(self):
        g = geo.DetectionGeometry(ALPHA, 65.0, 1_000.0)
        with pytest.raises(geo.NoIntersectionError) as err:
            geo.circle_intersection_angle(g, geo.MicrostructureAngle.from_delta(1.0))
        assert math.isclose(err.value.delta, 1.0)


class TestMicrostructureAngle:
    def test_redundant_fields_checked(self):
        with pytest.raises(ValueError):
            geo.MicrostructureAngle(delta=1.0, phi=0.0)

    def test_wraps_into_half_turn(self):
        a = geo.MicrostructureAngle.from_delta(math.pi + 0.25)
        assert math.isclose(a.delta, 0.25)
        b = geo.MicrostructureAngle.from_phi(-math.pi / 2)
        assert b.degenerate

    def test_geometry_validation(self):
        with pytest.raises(ValueError):
            geo.DetectionGeometry(alpha=-0.1, d=65.0, circle_radius=15.0)
        with pytest.raises(ValueError):
            geo.DetectionGeometry(alpha=1.0, d=0.0, circle_radius=15.0)
        with pytest.raises(ValueError):
            geo.DetectionGeometry(alpha=1.0, d=65.0, circle_radius=15.0, sensor_count=1)
