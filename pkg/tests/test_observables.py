"""Quadrature statistics, Husimi grids, and spin excitation extraction."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rabisqueeze import analytics
from rabisqueeze import hilbert as hb
from rabisqueeze import observables as obs
from rabisqueeze.dynamics import MomentState, QuadraturePoint, Trajectory
from rabisqueeze.models import RabiSystem

# Frozen from the closed-form oracle: exp(-2r)/4 and exp(+2r)/4 at
# r = 0.415183, and 10*log10(4 var).
VARX_SQUEEZED = 0.10897243037122205
VARP_SQUEEZED = 0.5735395621359408
DB_SQUEEZED = -3.606250869481774

NAN_C = complex(math.nan, math.nan)


def field_ket(cutoff, build):
    space = hb.fock_space(cutoff)
    return build(space)


def squeezed_vacuum(cutoff=60, r=0.415183):
    space = hb.fock_space(cutoff)
    return hb.squeeze(space, r) @ hb.vacuum(space)


def tensor_ket(field: hb.Ket, spin_vec) -> hb.Ket:
    spin_sp = hb.spin_space(len(spin_vec))
    space = hb.tensor_space(field.space, spin_sp)
    vec = np.kron(field.vec, np.asarray(spin_vec, dtype=np.complex128))
    return hb.Ket(vec, space, normalize=True)


class TestQuadratureStats:
    def test_vacuum(self):
        stats = obs.quadrature_stats(hb.vacuum(hb.fock_space(20)))
        assert stats.t == 0.0
        assert abs(stats.meanX) < 1e-14
        assert abs(stats.meanP) < 1e-14
        assert abs(stats.varX - 0.25) < 1e-12
        assert abs(stats.varP - 0.25) < 1e-12
        assert abs(stats.covXP) < 1e-14
        assert abs(stats.uncertainty_product - 1.0 / 16.0) < 1e-12
        assert stats.tilt_fit == 0.0

    def test_squeezed_vacuum_matches_closed_form(self):
        stats = obs.quadrature_stats(squeezed_vacuum())
        assert abs(stats.varX - VARX_SQUEEZED) < 1e-9
        assert abs(stats.varP - VARP_SQUEEZED) < 1e-9
        assert abs(stats.covXP) < 1e-9
        assert abs(stats.uncertainty_product - 1.0 / 16.0) < 1e-9

    def test_coherent(self):
        state = field_ket(60, lambda sp: hb.coherent_ket(sp, 3.0))
        stats = obs.quadrature_stats(state, t=1.5)
        assert stats.t == 1.5
        assert abs(stats.meanX - 3.0) < 1e-9
        assert abs(stats.meanP) < 1e-9
        assert abs(stats.varX - 0.25) < 1e-9
        assert abs(stats.varP - 0.25) < 1e-9

    def test_moment_route_matches_matrix_route(self):
        space = hb.fock_space(80)
        psi = hb.displacement(space, 1.3 - 0.7j) @ (hb.squeeze(space, 0.3) @ hb.vacuum(space))
        a = hb.annihilation(space)
        ms = MomentState(
            a_mean=hb.expectation(a, psi),
            sigma12=NAN_C,
            sigma22=math.nan,
            a2=hb.expectation(a @ a, psi),
            photon_number=hb.expectation(hb.number(space), psi).real,
        )
        direct = obs.quadrature_stats(psi)
        from_moments = obs.quadrature_stats(ms)
        for name in ("meanX", "meanP", "varX", "varP", "covXP",
                     "uncertainty_product", "tilt_fit"):
            assert abs(getattr(direct, name) - getattr(from_moments, name)) < 1e-12

    def test_density_matrix_and_tensor_dispatch(self):
        field = field_ket(40, lambda sp: hb.coherent_ket(sp, 1.0 + 0.5j))
        via_ket = obs.quadrature_stats(field)
        via_dm = obs.quadrature_stats(field.to_density_matrix())
        via_tensor = obs.quadrature_stats(tensor_ket(field, [1.0, 0.0]))
        for name in ("meanX", "meanP", "varX", "varP", "covXP"):
            assert abs(getattr(via_ket, name) - getattr(via_dm, name)) < 1e-12
            assert abs(getattr(via_ket, name) - getattr(via_tensor, name)) < 1e-12

    def test_tracks_kicked_closed_forms(self):
        sys = RabiSystem.from_ratio(1e5, 0.9)
        params = analytics.squeeze_params(sys)
        space = hb.fock_space(160)
        var_x, var_p = analytics.kicked_variances(sys)
        for t in (0.0, 0.9, 3.7):
            state = analytics.squeezed_coherent_state(space, 3.0, params.xi, t=t)
            stats = obs.quadrature_stats(state, t=t)
            mean_x, mean_p = analytics.kicked_orbit(sys, 3.0, t)
            assert abs(stats.meanX - mean_x) < 1e-6
            assert abs(stats.meanP - mean_p) < 1e-6
            assert abs(stats.varX - var_x) < 1e-6
            assert abs(stats.varP - var_p) < 1e-6
            assert abs(stats.covXP) < 1e-6

    @given(st.lists(st.tuples(st.floats(-1, 1), st.floats(-1, 1)),
                    min_size=2, max_size=8))
    @settings(max_examples=60, deadline=None)
    def test_uncertainty_floor_on_random_states(self, amps):
        vec = np.array([complex(re, im) for re, im in amps])
        if np.linalg.norm(vec) < 1e-3:
            vec[0] += 1.0
        state = hb.Ket(vec, hb.fock_space(len(vec) - 1), normalize=True)
        stats = obs.quadrature_stats(state)
        assert stats.uncertainty_product >= 1.0 / 16.0 - 1e-9

    def test_unphysical_moments_rejected(self):
        ms = MomentState(a_mean=0j, sigma12=NAN_C, sigma22=math.nan,
                         a2=0.5 + 0j, photon_number=0.1)
        with pytest.raises(ValueError, match="uncertainty"):
            obs.quadrature_stats(ms)

    def test_states_without_second_moments_rejected(self):
        with pytest.raises(ValueError, match="second moments"):
            obs.quadrature_stats(MomentState(1.0 + 0j, NAN_C, math.nan))
        with pytest.raises(ValueError, match="second moments"):
            obs.quadrature_stats(QuadraturePoint(1.0, 0.0))


class TestHusimi:
    def test_vacuum_center_and_symmetry(self):
        grid = obs.husimi_q(hb.vacuum(hb.fock_space(30)), resolution=41)
        mid = 41 // 2
        assert abs(grid.re_axis[mid]) < 1e-14
        assert abs(grid.values[mid, mid] - 1.0 / math.pi) < 1e-12
        np.testing.assert_allclose(grid.values, grid.values[::-1, :], atol=1e-12)
        np.testing.assert_allclose(grid.values, grid.values[:, ::-1], atol=1e-12)
        np.testing.assert_allclose(grid.values, grid.values.T, atol=1e-12)
        assert 0.95 <= grid.mass <= 1.0001

    def test_coherent_peak_location(self):
        state = field_ket(80, lambda sp: hb.coherent_ket(sp, 3.0))
        grid = obs.husimi_q(state, resolution=81)
        i_im, i_re = np.unravel_index(np.argmax(grid.values), grid.values.shape)
        cell_re = grid.re_axis[1] - grid.re_axis[0]
        cell_im = grid.im_axis[1] - grid.im_axis[0]
        assert abs(grid.re_axis[i_re] - 3.0) <= cell_re + 1e-12
        assert abs(grid.im_axis[i_im]) <= cell_im + 1e-12
        assert 0.95 <= grid.mass <= 1.0001

    def test_mixed_state_via_eigen_route(self):
        space = hb.fock_space(30)
        k0, k1 = hb.vacuum(space), hb.fock_ket(space, 1)
        mat = 0.5 * k0.outer().mat + 0.5 * k1.outer().mat
        rho = hb.DensityMatrix(mat, space)
        ranges = dict(re_range=(-3.0, 3.0), im_range=(-3.0, 3.0), resolution=61)
        mixed = obs.husimi_q(rho, **ranges)
        part0 = obs.husimi_q(k0, **ranges)
        part1 = obs.husimi_q(k1, **ranges)
        np.testing.assert_allclose(
            mixed.values, 0.5 * part0.values + 0.5 * part1.values, atol=1e-12)

    def test_tensor_state_traces_spin(self):
        field = field_ket(40, lambda sp: hb.coherent_ket(sp, 1.5j))
        ranges = dict(re_range=(-2.0, 2.0), im_range=(-0.5, 3.5), resolution=41)
        from_field = obs.husimi_q(field, **ranges)
        from_tensor = obs.husimi_q(tensor_ket(field, [0.6, 0.8]), **ranges)
        np.testing.assert_allclose(from_tensor.values, from_field.values, atol=1e-12)

    def test_undersized_grid_warns(self):
        with pytest.warns(RuntimeWarning, match="mass"):
            grid = obs.husimi_q(hb.vacuum(hb.fock_space(20)),
                                re_range=(-0.4, 0.4), im_range=(-0.4, 0.4),
                                resolution=21)
        assert grid.mass < 0.95

    def test_grid_geometry(self):
        grid = obs.husimi_q(hb.vacuum(hb.fock_space(10)), resolution=21)
        assert grid.resolution == 21
        assert grid.values.shape == (21, 21)
        assert grid.re_axis.shape == (21,)
        assert grid.re_axis[0] == grid.re_range[0]
        assert grid.im_axis[-1] == grid.im_range[1]
        assert np.all(grid.values >= -1e-12)


class TestSpinExcitation:
    def test_ground_and_excited(self):
        field = hb.vacuum(hb.fock_space(4))
        assert abs(obs.spin_excitation(tensor_ket(field, [1.0, 0.0]))) < 1e-12
        assert abs(obs.spin_excitation(tensor_ket(field, [0.0, 1.0])) - 1.0) < 1e-12

    def test_collective_half_excited(self):
        field = hb.vacuum(hb.fock_space(4))
        state = tensor_ket(field, [0.0, 1.0, 0.0])  # N = 2, m = 0
        assert abs(obs.spin_excitation(state) - 0.5) < 1e-12

    def test_mixed_state(self):
        field = hb.vacuum(hb.fock_space(4))
        up = tensor_ket(field, [0.0, 1.0])
        down = tensor_ket(field, [1.0, 0.0])
        mat = 0.25 * up.outer().mat + 0.75 * down.outer().mat
        rho = hb.DensityMatrix(mat, up.space)
        assert abs(obs.spin_excitation(rho) - 0.25) < 1e-12

    def test_moment_state_population(self):
        ms = MomentState(a_mean=0.2 + 0.1j, sigma12=0j, sigma22=0.37)
        assert obs.spin_excitation(ms) == 0.37

    def test_missing_spin_factor(self):
        with pytest.raises(ValueError, match="spin"):
            obs.spin_excitation(hb.vacuum(hb.fock_space(4)))
        with pytest.raises(ValueError, match="spin"):
            obs.spin_excitation(QuadraturePoint(0.0, 0.0))


class TestSqueezingDb:
    def test_golden(self):
        assert abs(obs.squeezing_db(0.108972) - DB_SQUEEZED) < 1e-12

    def test_vacuum_reference(self):
        assert obs.squeezing_db(0.25) == 0.0

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            obs.squeezing_db(0.0)
        with pytest.raises(ValueError):
            obs.squeezing_db(-0.1)

    @given(st.floats(1e-6, 1e3))
    @settings(max_examples=50, deadline=None)
    def test_roundtrip(self, var):
        db = obs.squeezing_db(var)
        assert math.isclose(10.0 ** (db / 10.0) / 4.0, var, rel_tol=1e-12)


class TestOrbitTiltFit:
    def test_matches_analytic_orbit_tilt(self):
        sys = RabiSystem.from_ratio(2e3, 0.8, kappa=1.0, gamma=1.0,
                                    eta=1.0, omega_d=0.6)
        orbit = analytics.steady_orbit(sys)
        t = np.arange(4096) * (2 * math.pi / sys.omega_d) / 4096
        x, p = orbit.means(t)
        fitted = obs.orbit_tilt_fit(x, p)
        assert abs(fitted - analytics.tilt_angle(sys)) < 1e-9
        assert -math.pi / 4 < fitted <= math.pi / 4

    def test_circle_has_no_axis(self):
        t = np.arange(1024) * (2 * math.pi) / 1024
        assert obs.orbit_tilt_fit(np.cos(t), np.sin(t)) == 0.0

    def test_known_diagonal_stretch(self):
        t = np.arange(2048) * (2 * math.pi) / 2048
        x = 3.0 * np.cos(t)
        p = 1.0 * np.sin(t)
        c, s = math.cos(0.3), math.sin(0.3)
        xr = c * x - s * p
        pr = s * x + c * p
        assert abs(obs.orbit_tilt_fit(xr, pr) - 0.3) < 1e-9


class TestTrajectoryTable:
    def test_moment_snapshots(self):
        snaps = [
            MomentState(a_mean=0.5 + 0.25j, sigma12=0j, sigma22=0.1,
                        a2=0.3 + 0j, photon_number=0.4),
            MomentState(a_mean=0.4 + 0.30j, sigma12=0j, sigma22=0.2,
                        a2=0.2 + 0j, photon_number=0.3),
        ]
        traj = Trajectory(times=np.array([0.0, 1.0]), snapshots=snaps)
        table = obs.trajectory_table(traj)
        assert set(table) == {"t", "meanX", "meanP", "varX", "varP", "covXP",
                              "sigma22", "photon_number"}
        np.testing.assert_allclose(table["t"], [0.0, 1.0])
        np.testing.assert_allclose(table["meanX"], [0.5, 0.4])
        np.testing.assert_allclose(table["meanP"], [0.25, 0.30])
        np.testing.assert_allclose(table["sigma22"], [0.1, 0.2])
        np.testing.assert_allclose(table["photon_number"], [0.4, 0.3])
        assert np.all(np.isfinite(table["varX"]))

    def test_means_only_moment_snapshots(self):
        snaps = [MomentState(0.5 + 0j, 0j, 0.1)]
        table = obs.trajectory_table(Trajectory(np.array([0.0]), snaps))
        assert math.isnan(table["varX"][0])
        assert math.isnan(table["covXP"][0])
        assert table["sigma22"][0] == 0.1

    def test_quadrature_snapshots(self):
        snaps = [QuadraturePoint(1.0, -2.0), QuadraturePoint(0.5, -1.0)]
        table = obs.trajectory_table(Trajectory(np.array([0.0, 0.5]), snaps))
        np.testing.assert_allclose(table["meanX"], [1.0, 0.5])
        np.testing.assert_allclose(table["meanP"], [-2.0, -1.0])
        assert np.all(np.isnan(table["varX"]))
        assert np.all(np.isnan(table["sigma22"]))
        assert np.all(np.isnan(table["photon_number"]))

    def test_ket_snapshots(self):
        field = hb.coherent_ket(hb.fock_space(30), 1.0)
        state = tensor_ket(field, [1.0, 0.0])
        table = obs.trajectory_table(Trajectory(np.array([0.0]), [state]))
        assert abs(table["meanX"][0] - 1.0) < 1e-9
        assert abs(table["varX"][0] - 0.25) < 1e-9
        assert abs(table["sigma22"][0]) < 1e-12
        assert abs(table["photon_number"][0] - 1.0) < 1e-9

    def test_field_only_ket_has_nan_spin_column(self):
        ket = hb.vacuum(hb.fock_space(8))
        table = obs.trajectory_table(Trajectory(np.array([0.0]), [ket]))
        assert math.isnan(table["sigma22"][0])
        assert abs(table["photon_number"][0]) < 1e-12
