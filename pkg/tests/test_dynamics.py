import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from thirdgrade.dynamics import (
    ForcingSchedule,
    IntegrationFailure,
    PhysicalParams,
    SolverState,
    StepRefused,
    Trajectory,
    canonical_state,
    continuity_bound,
    curl_residual,
    doss_sussman_forward,
    doss_sussman_inverse,
    integrate,
    load_checkpoint,
    recover_pressure,
    rhs_transformed,
    save_checkpoint,
    stability_limit,
    step,
)
from thirdgrade.fields import (
    ConfigurationError,
    Grid,
    VelocityField,
    divergence_residual,
    leray_coeffs,
    random_velocity,
)
from thirdgrade.stochastics import generate_path


def _shear(grid, amp=0.2):
    x1, x2 = grid.coordinates()
    return ForcingSchedule.constant(grid, amp * np.stack([np.sin(x2), np.cos(x1)]), delta=0.25)


def _single_mode(grid, k=1):
    x1, x2 = grid.coordinates()
    return VelocityField.from_physical(grid, np.stack([np.sin(k * x2), 0 * x2]))


class TestParams:
    @pytest.mark.parametrize("kw", [
        dict(nu=0.0, alpha=0.0, beta=0.1, sigma=1.0),
        dict(nu=0.1, alpha=0.0, beta=0.0, sigma=1.0),
        dict(nu=0.1, alpha=0.0, beta=0.1, sigma=0.0),
        dict(nu=0.1, alpha=0.2, beta=0.1, sigma=1.0),
        dict(nu=0.1, alpha=0.1, beta=0.0, sigma=1.0, linear=True),
    ])
    def test_invalid_parameters_rejected(self, kw):
        with pytest.raises(ConfigurationError):
            PhysicalParams(**kw)

    def test_epsilon0_and_rate(self):
        p = PhysicalParams(0.5, 0.1, 0.04, 1.0)
        assert p.epsilon0 == pytest.approx(1 - math.sqrt(0.01 / 0.04))
        assert p.absorption_rate == pytest.approx(min(2 * 0.5 * p.epsilon0, 1.0))

    def test_forcing_delta_constraint(self, grid16):
        f = _shear(grid16)
        f.check_delta(1.0)
        with pytest.raises(ConfigurationError):
            f.check_delta(0.5)
        with pytest.raises(ConfigurationError):
            ForcingSchedule("periodic")


class TestLinearModel:
    """Single Fourier mode of the linear model against closed forms."""

    def test_matches_discrete_product_formula(self):
        g = Grid(16)
        p = PhysicalParams(0.1, 0.0, 0.0, 1.0, linear=True)
        path = generate_path(3, 0.0, 5.0, 0.01)
        z0 = _single_mode(g, 2)
        res = integrate(z0, path, p, ForcingSchedule.zero(), 0.0, 5.0, keep_ledger=False)
        lam = 0.1 * 4 + 0.5 - path.ou_samples[:-1]
        expected = np.prod(1.0 / (1.0 + 0.01 * lam))
        np.testing.assert_allclose(res.z[0], expected * z0.coeffs, rtol=1e-11, atol=1e-14)

    def test_first_order_convergence_to_exact_solution(self):
        # Y(t) = Y(0) exp(-nu |k|^2 t - sigma^2 t / 2 + sigma W(t)); the rms
        # relative error over paths should halve with dt
        g = Grid(16)
        p = PhysicalParams(0.1, 0.0, 0.0, 1.0, linear=True)
        z0 = _single_mode(g, 1)
        errors = np.zeros((3, 64))
        for s in range(64):
            fine = generate_path(100 + s, 0.0, 1.0, 0.0025)
            for i, factor in enumerate((4, 2, 1)):
                path = fine.coarsen(factor)
                res = integrate(z0, path, p, ForcingSchedule.zero(), 0.0, 1.0, keep_ledger=False)
                y_end = doss_sussman_inverse(res.field(), path, 1.0, 1.0)
                y0 = doss_sussman_inverse(z0, path, 0.0, 1.0)
                exact = math.exp(-0.1 - 0.5 + path.wiener_at(1.0))
                errors[i, s] = (y_end.coeffs[0, 0, 1] / y0.coeffs[0, 0, 1]).real / exact - 1.0
        rms = np.sqrt((errors**2).mean(axis=1))
        ratios = rms[:-1] / rms[1:]
        assert np.all((ratios > 1.7) & (ratios < 2.3)), (rms, ratios)


class TestStepping:
    def test_step_refuses_oversized_dt(self, grid16, rng):
        p = PhysicalParams(0.1, 0.0, 0.5, 1.0)
        z = random_velocity(grid16, rng, l2_norm=20.0)
        path = generate_path(0, 0.0, 1.0, 0.5)
        limit = stability_limit(z, 0.0, path, p, ForcingSchedule.zero())
        with pytest.raises(StepRefused):
            step(SolverState(0.0, z), path, p, ForcingSchedule.zero(), 2 * limit)
        out = step(SolverState(0.0, z), path, p, ForcingSchedule.zero(), 0.5 * limit)
        assert out.t == pytest.approx(0.5 * limit)

    def test_tendency_is_divergence_free(self, grid16, rng):
        p = PhysicalParams(0.1, 0.02, 0.01, 1.0)
        path = generate_path(0, 0.0, 1.0, 0.05)
        z = random_velocity(grid16, rng)
        out = rhs_transformed(z, 0.0, path, p, _shear(grid16))
        scale = np.abs(out["tendency"].coeffs).max() * grid16.n_modes
        assert divergence_residual(grid16, out["tendency"].coeffs) < 1e-14 * scale
        np.testing.assert_allclose(leray_coeffs(grid16, out["unprojected"]), out["tendency"].coeffs,
                                   atol=1e-12 * scale)

    def test_energy_decays_without_noise_or_forcing(self, grid16, rng):
        p = PhysicalParams(0.1, 0.02, 0.01, 1.0)
        path = generate_path(0, 0.0, 5.0, 0.01, zero_noise=True)
        z = random_velocity(grid16, rng, l2_norm=2.0)
        res = integrate(z, path, p, ForcingSchedule.zero(), 0.0, 5.0)
        e = res.ledgers[0].column("z_l2_sq")
        assert np.all(np.diff(e) <= 0)

    def test_substeps_taken_for_large_states(self, grid16, rng):
        p = PhysicalParams(0.1, 0.0, 0.1, 1.0)
        path = generate_path(1, 0.0, 0.2, 0.05)
        z = random_velocity(grid16, rng, l2_norm=10.0)
        res = integrate(z, path, p, ForcingSchedule.zero(), 0.0, 0.2)
        assert res.substeps > 4
        assert res.ledgers[0].column("dt").sum() == pytest.approx(0.2)

    def test_step_underflow_raises_integration_failure(self, grid16, rng):
        p = PhysicalParams(0.1, 0.0, 0.1, 1.0)
        path = generate_path(1, 0.0, 0.1, 0.05)
        z = random_velocity(grid16, rng, l2_norm=1e6)
        with pytest.raises(IntegrationFailure):
            integrate(z, path, p, ForcingSchedule.zero(), 0.0, 0.1, max_halvings=4)

    def test_step_budget(self, grid16, rng):
        p = PhysicalParams(0.1, 0.02, 0.01, 1.0)
        path = generate_path(1, 0.0, 1.0, 0.05)
        with pytest.raises(IntegrationFailure):
            integrate(random_velocity(grid16, rng), path, p, ForcingSchedule.zero(), 0.0, 1.0,
                      max_steps=5)

    def test_batch_members_match_individual_runs(self, grid16, rng):
        p = PhysicalParams(0.5, 0.05, 0.02, 1.0)
        paths = [generate_path(s, 0.0, 1.0, 0.05) for s in (1, 2)]
        zs = [random_velocity(grid16, rng, l2_norm=0.3) for _ in range(2)]
        f = _shear(grid16, 0.1)
        batch = integrate((grid16, np.stack([z.coeffs for z in zs])), paths, p, f, 0.0, 1.0)
        assert batch.substeps == 20
        for b in range(2):
            single = integrate(zs[b], paths[b], p, f, 0.0, 1.0)
            np.testing.assert_allclose(batch.z[b], single.z[0], rtol=0, atol=1e-13)

    def test_batch_requires_one_path_per_member(self, grid16, rng):
        p = PhysicalParams(0.5, 0.05, 0.02, 1.0)
        z = random_velocity(grid16, rng)
        with pytest.raises(ConfigurationError):
            integrate((grid16, np.stack([z.coeffs] * 3)), [generate_path(0, 0.0, 1.0, 0.05)] * 2,
                      p, ForcingSchedule.zero(), 0.0, 1.0)


class TestEnergyLedger:
    @settings(max_examples=10, deadline=None)
    @given(seed=st.integers(0, 2**31 - 1))
    def test_audit_ratio_bounded_by_one_when_damping_nonnegative(self, seed):
        # with the OU value pinned at 0 the implicit symbol is positive and
        # the one-step energy residual is bounded by dt * audit_scale
        g = Grid(16)
        r = np.random.default_rng(seed)
        p = PhysicalParams(0.2, 0.05, 0.02, 1.0)
        path = generate_path(0, 0.0, 1.0, 0.05, zero_noise=True)
        res = integrate(random_velocity(g, r), path, p, _shear(g), 0.0, 1.0)
        assert res.ledgers[0].audit_ratio().max() <= 1.0 + 1e-9

    def test_residual_scales_with_dt(self, grid16, rng):
        p = PhysicalParams(0.2, 0.05, 0.02, 1.0)
        fine = generate_path(5, 0.0, 2.0, 0.025)
        # band-limited data so neither run sub-cycles
        z = random_velocity(grid16, rng, k_cut=4, slope=2.0, l2_norm=0.3)
        maxima = []
        for path in (fine.coarsen(2), fine):
            res = integrate(z, path, p, _shear(grid16), 0.0, 2.0)
            assert res.substeps == path.steps
            led = res.ledgers[0]
            maxima.append(np.abs(led.column("audit_residual")).max())
        assert 1.5 < maxima[0] / maxima[1] < 3.0

    def test_validate_flags_bad_rows(self, grid16, rng):
        p = PhysicalParams(0.2, 0.05, 0.02, 1.0)
        led = integrate(random_velocity(grid16, rng), generate_path(0, 0.0, 0.5, 0.05), p,
                        ForcingSchedule.zero(), 0.0, 0.5).ledgers[0]
        led.validate()
        led.rows[3, 0] = led.rows[2, 0]
        with pytest.raises(ValueError):
            led.validate()


class TestTransformAndPressure:
    def test_doss_sussman_roundtrip(self, grid16, rng):
        path = generate_path(2, 0.0, 1.0, 0.1)
        z = random_velocity(grid16, rng)
        back = doss_sussman_forward(doss_sussman_inverse(z, path, 0.5, 1.3), path, 0.5, 1.3)
        np.testing.assert_allclose(back.coeffs, z.coeffs, rtol=1e-14, atol=1e-16)

    @pytest.mark.parametrize("seed", range(5))
    def test_pressure_gradients(self, seed):
        g = Grid(16)
        r = np.random.default_rng(seed)
        p = PhysicalParams(0.1, 0.02, 0.01, 1.0)
        path = generate_path(seed, 0.0, 1.0, 0.1)
        z = random_velocity(g, r, l2_norm=2.0)
        grads = recover_pressure(z, 0.5, path, p, _shear(g))
        total = grads.p1_gradient + grads.p2_gradient
        scale = np.abs(total).max()
        assert np.abs(leray_coeffs(g, total)).max() <= 1e-12 * scale
        assert curl_residual(g, grads.p1_gradient) <= 1e-11
        assert curl_residual(g, grads.p2_gradient) <= 1e-11


class TestContinuity:
    def test_distance_stays_below_gronwall_bound(self, grid16, rng):
        p = PhysicalParams(0.2, 0.05, 0.02, 1.0)
        path = generate_path(6, 0.0, 3.0, 0.05)
        z1 = random_velocity(grid16, rng, l2_norm=0.5)
        z2 = z1 + random_velocity(grid16, rng, l2_norm=0.05)
        f = _shear(grid16, 0.1)
        t1 = Trajectory.from_result(integrate(z1, path, p, f, 0.0, 3.0, record_every=2, keep_ledger=False))
        t2 = Trajectory.from_result(integrate(z2, path, p, f, 0.0, 3.0, record_every=2, keep_ledger=False))
        bound = continuity_bound(t1, t2, path, p)
        assert np.all(bound.lhs <= bound.rhs * (1 + 1e-9))

    def test_time_grids_must_agree(self, grid16):
        p = PhysicalParams(0.2, 0.05, 0.02, 1.0)
        a = Trajectory(grid16, np.array([0.0, 1.0]), np.zeros((2, 2, 16, 16), complex))
        b = Trajectory(grid16, np.array([0.0, 2.0]), np.zeros((2, 2, 16, 16), complex))
        with pytest.raises(ConfigurationError):
            continuity_bound(a, b, generate_path(0, 0.0, 2.0, 1.0), p, m_const=1.0)


class TestCheckpoints:
    def test_roundtrip_metadata(self, tmp_path, grid16, rng):
        p = PhysicalParams(0.2, 0.05, 0.02, 1.0)
        z = random_velocity(grid16, rng)
        save_checkpoint(tmp_path / "c.ckpt", SolverState(0.1 + 0.2, z), 17, 3, p, 42)
        state, meta = load_checkpoint(tmp_path / "c.ckpt")
        assert state.t == 0.1 + 0.2
        assert meta["params"] == p and meta["path_seed"] == 17 and meta["ledger_cursor"] == 42
        np.testing.assert_allclose(state.z.coeffs, z.coeffs, atol=1e-13)

    def test_restart_reproduces_uninterrupted_run_bitwise(self, tmp_path, grid16, rng):
        p = PhysicalParams(0.2, 0.05, 0.02, 1.0)
        f = _shear(grid16, 0.1)
        path = generate_path(9, 0.0, 2.0, 0.05)
        z0 = random_velocity(grid16, rng)
        full = integrate(z0, path, p, f, 0.0, 2.0, checkpoint_at=1.0,
                         canonicalize=lambda zh: canonical_state(grid16, zh))
        first = integrate(z0, path, p, f, 0.0, 1.0)
        save_checkpoint(tmp_path / "c.ckpt", SolverState(1.0, first.field()), 9, 0, p, len(first.ledgers[0]))
        state, meta = load_checkpoint(tmp_path / "c.ckpt")
        rest = integrate(state.z, path, meta["params"], f, state.t, 2.0)
        assert rest.z.tobytes() == full.z.tobytes()

    def test_corrupt_checkpoint_rejected(self, tmp_path):
        (tmp_path / "bad.ckpt").write_bytes(b"{not json\n")
        with pytest.raises(ConfigurationError):
            load_checkpoint(tmp_path / "bad.ckpt")
