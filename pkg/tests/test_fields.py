import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from thirdgrade.fields import (
    ConfigurationError,
    Cutoff,
    Grid,
    VelocityField,
    divergence_residual,
    dual_norm_sq,
    forward_transform,
    gradient_coeffs,
    gradient_part_coeffs,
    inner_mass,
    inner_product,
    inverse_transform,
    leray_coeffs,
    parse_snapshot,
    random_velocity,
    read_snapshot,
    smoothstep_profile,
    snapshot_bytes,
    sym_gradient_coeffs,
    tail_mass,
    write_snapshot,
)


class TestGrid:
    @pytest.mark.parametrize("n", [7, 6, 9, 15])
    def test_rejects_bad_mode_counts(self, n):
        with pytest.raises(ConfigurationError):
            Grid(n)

    def test_rejects_nonpositive_box(self):
        with pytest.raises(ConfigurationError):
            Grid(16, 0.0)

    def test_padded_sizes(self):
        g = Grid(32)
        assert g.quadratic_size == 48
        assert g.cubic_size == 64

    def test_nyquist_zeroed_after_transform(self, rng):
        g = Grid(16)
        c = forward_transform(g, rng.standard_normal((2, 16, 16)))
        assert np.all(c[:, 8, :] == 0) and np.all(c[:, :, 8] == 0)


class TestTransforms:
    def test_constant_field_mean_mode(self):
        g = Grid(16, 3.0)
        c = forward_transform(g, np.full((16, 16), 2.5))
        assert c[0, 0] == pytest.approx(2.5 * 9.0)
        assert np.abs(c).sum() == pytest.approx(2.5 * 9.0)

    def test_roundtrip_trigonometric_polynomial(self, grid16, rng):
        u = random_velocity(grid16, rng)
        back = forward_transform(grid16, inverse_transform(grid16, u.coeffs))
        np.testing.assert_allclose(back, u.coeffs, atol=1e-13)

    def test_parseval_against_physical_quadrature(self, grid16, rng):
        u = random_velocity(grid16, rng, l2_norm=None)
        v = u.physical()
        direct = (v**2).sum() * grid16.spacing**2
        assert float(inner_product(grid16, u.coeffs, u.coeffs)) == pytest.approx(direct, rel=1e-12)

    @pytest.mark.parametrize("size", [24, 32, 40])
    def test_padded_evaluation_matches_explicit_sum(self, size):
        g = Grid(8, 2 * math.pi)
        x1, x2 = g.coordinates()
        f = np.sin(2 * x1) * np.cos(3 * x2) + 0.5
        c = g.from_physical(f)
        X1, X2 = g.coordinates(size)
        np.testing.assert_allclose(g.to_physical(c, size), np.sin(2 * X1) * np.cos(3 * X2) + 0.5,
                                   atol=1e-13)

    def test_gradient_of_single_mode(self):
        g = Grid(16)
        x1, x2 = g.coordinates()
        u = VelocityField.from_physical(g, np.stack([np.sin(3 * x2), 0 * x2]))
        grad = g.to_physical(gradient_coeffs(g, u.coeffs))
        np.testing.assert_allclose(grad[0, 1], 3 * np.cos(3 * x2), atol=1e-12)
        np.testing.assert_allclose(grad[0, 0], 0, atol=1e-12)
        np.testing.assert_allclose(grad[1], 0, atol=1e-12)

    def test_sym_gradient_components(self):
        g = Grid(16)
        x1, x2 = g.coordinates()
        u = VelocityField.from_physical(g, np.stack([np.sin(x2), np.zeros_like(x2)]))
        e11, e22, e12 = g.to_physical(sym_gradient_coeffs(g, u.coeffs))
        np.testing.assert_allclose(e12, np.cos(x2), atol=1e-12)
        np.testing.assert_allclose(e11, 0, atol=1e-12)
        np.testing.assert_allclose(e22, 0, atol=1e-12)


class TestLeray:
    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 2**31 - 1))
    def test_projection_is_idempotent_and_divergence_free(self, seed):
        g = Grid(16)
        r = np.random.default_rng(seed)
        c = forward_transform(g, r.standard_normal((2, 16, 16)))
        p = leray_coeffs(g, c)
        assert divergence_residual(g, p) < 1e-13
        np.testing.assert_allclose(leray_coeffs(g, p), p, atol=1e-12)

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 2**31 - 1))
    def test_helmholtz_split_is_orthogonal(self, seed):
        g = Grid(16)
        r = np.random.default_rng(seed)
        c = forward_transform(g, r.standard_normal((2, 16, 16)))
        p, q = leray_coeffs(g, c), gradient_part_coeffs(g, c)
        np.testing.assert_allclose(p + q, c, atol=1e-12)
        scale = float(inner_product(g, c, c))
        assert abs(float(inner_product(g, p, q))) < 1e-12 * scale

    def test_gradient_field_is_annihilated(self):
        g = Grid(16)
        x1, x2 = g.coordinates()
        grad_phi = np.stack([np.cos(x1) * np.sin(2 * x2), 2 * np.sin(x1) * np.cos(2 * x2)])
        p = leray_coeffs(g, forward_transform(g, grad_phi))
        assert np.abs(p).max() < 1e-12

    def test_velocity_field_rejects_divergent_data(self, grid16):
        x1, x2 = grid16.coordinates()
        with pytest.raises(ConfigurationError):
            VelocityField(grid16, forward_transform(grid16, np.stack([np.sin(x1), 0 * x1])))


class TestRandomVelocity:
    @pytest.mark.parametrize("norm", [0.1, 1.0, 7.0])
    def test_norm_and_divergence(self, grid16, rng, norm):
        u = random_velocity(grid16, rng, k_cut=5, slope=1.5, l2_norm=norm)
        assert math.sqrt(u.l2_sq()) == pytest.approx(norm, rel=1e-12)
        assert divergence_residual(grid16, u.coeffs) < 1e-13

    def test_band_limit(self, grid16, rng):
        u = random_velocity(grid16, rng, k_cut=3)
        ki = np.abs(grid16.integer_wavenumbers)
        outside = np.maximum.outer(ki, ki) > 3
        assert np.abs(u.coeffs[:, outside]).max() == 0
        assert np.abs(u.coeffs[:, 0, 0]).max() == 0

    def test_dual_norm_below_l2(self, grid16, rng):
        u = random_velocity(grid16, rng)
        assert float(dual_norm_sq(grid16, u.coeffs)) < u.l2_sq()


class TestCutoff:
    def test_profile_endpoints(self):
        assert smoothstep_profile(np.array([0.0, 1.0]))[0] == 0.0
        assert smoothstep_profile(np.array([0.0, 1.0]))[1] == 1.0
        assert smoothstep_profile(np.array(0.5)) == pytest.approx(0.5)

    def test_weights_vanish_inside_and_saturate_outside(self):
        g = Grid(64)
        cut = Cutoff(1.0)
        w = cut.weights(g)
        x1, x2 = g.coordinates()
        r2 = (x1 - math.pi) ** 2 + (x2 - math.pi) ** 2
        assert np.all(w[r2 <= 1.0] == 0)
        assert np.all(w[r2 >= 2.0] == 1)

    def test_radius_must_fit_in_cell(self, grid16):
        with pytest.raises(ConfigurationError):
            Cutoff(math.pi).weights(grid16)
        with pytest.raises(ConfigurationError):
            Cutoff(0.0)

    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(0, 2**31 - 1))
    def test_tail_mass_decreases_with_radius(self, seed):
        g = Grid(16)
        u = random_velocity(g, np.random.default_rng(seed))
        masses = [tail_mass(u, Cutoff(r)) for r in (0.2, 0.5, 1.0, 1.5, 2.0)]
        assert all(b <= a + 1e-14 for a, b in zip(masses, masses[1:]))
        assert masses[0] <= u.l2_sq() * (1 + 1e-12)

    def test_inner_and_tail_cover_the_cell(self, grid16, rng):
        u = random_velocity(grid16, rng)
        # rho^2 = 1 outside sqrt(2) k, so inner(sqrt(2) k) + tail >= total
        k = 1.0
        assert inner_mass(u, math.sqrt(2) * k) + tail_mass(u, Cutoff(k)) >= u.l2_sq() * (1 - 1e-12)


class TestSnapshots:
    def test_roundtrip(self, tmp_path, grid16, rng):
        u = random_velocity(grid16, rng)
        write_snapshot(tmp_path / "u.snap", u)
        g, values = read_snapshot(tmp_path / "u.snap")
        assert g == grid16
        np.testing.assert_array_equal(values, u.physical())

    def test_bytes_are_deterministic(self, grid16, rng):
        u = random_velocity(grid16, rng)
        assert snapshot_bytes(grid16, u.physical()) == snapshot_bytes(grid16, u.physical())

    def test_truncated_snapshot_rejected(self, grid16, rng):
        raw = snapshot_bytes(grid16, random_velocity(grid16, rng).physical())
        with pytest.raises(ConfigurationError):
            parse_snapshot(raw[:-8])
