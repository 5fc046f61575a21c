"""Quantum-core checks: operators, canonical states, validation tolerances.

Oracles here are built independently of the module under test: coherent
states from an explicit factorial series, variances from closed forms
evaluated with math.exp, commutators from dense matrix arithmetic.
"""

import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rabisqueeze import hilbert as hb


def series_coherent(cutoff: int, alpha: complex) -> np.ndarray:
    """Oracle: coherent amplitudes alpha^n/sqrt(n!) normalized on the truncation."""
    amps = np.array([alpha ** n / math.sqrt(math.factorial(n)) for n in range(cutoff + 1)],
                    dtype=np.complex128)
    return amps / np.linalg.norm(amps)


def ket_quadrature_moments(psi: hb.Ket):
    x, p = hb.quadrature_ops(psi.space)
    mx = hb.expectation(x, psi).real
    mp = hb.expectation(p, psi).real
    vx = hb.expectation(x @ x, psi).real - mx ** 2
    vp = hb.expectation(p @ p, psi).real - mp ** 2
    xp = 0.5 * (hb.expectation(x @ p, psi) + hb.expectation(p @ x, psi)).real
    cov = xp - mx * mp
    return mx, mp, vx, vp, cov


class TestSpaces:
    def test_fock_dim_counts_levels_through_cutoff(self):
        assert hb.fock_space(40).dim == 41

    def test_cross_space_operations_rejected(self):
        a = hb.annihilation(hb.fock_space(10))
        b = hb.annihilation(hb.fock_space(12))
        with pytest.raises(ValueError, match="different spaces"):
            _ = a @ b
        with pytest.raises(ValueError, match="different spaces"):
            _ = a + b
        with pytest.raises(ValueError, match="different spaces"):
            hb.expectation(a, hb.vacuum(hb.fock_space(12)))

    def test_operator_array_is_read_only(self):
        a = hb.annihilation(hb.fock_space(5))
        with pytest.raises(ValueError):
            a.mat[0, 0] = 1.0


class TestCanonicalOperators:
    def test_commutator_is_identity_below_cutoff(self):
        space = hb.fock_space(30)
        a = hb.annihilation(space)
        comm = (a @ a.dag() - a.dag() @ a).mat
        # truncation corrupts only the top diagonal entry (it reads -cutoff)
        assert np.allclose(np.diag(comm)[:-1], 1.0, atol=1e-13)
        assert np.isclose(np.diag(comm)[-1].real, -space.cutoff)

    def test_number_operator_matches_adag_a(self):
        space = hb.fock_space(25)
        a = hb.annihilation(space)
        assert np.allclose((a.dag() @ a).mat, hb.number(space).mat, atol=1e-13)

    def test_quadrature_commutator(self):
        space = hb.fock_space(30)
        x, p = hb.quadrature_ops(space)
        comm = (x @ p - p @ x).mat
        assert np.allclose(np.diag(comm)[:-1], 0.5j, atol=1e-13)

    def test_hermiticity_and_unitarity_checks(self):
        space = hb.fock_space(12)
        n = hb.number(space)
        assert n.is_hermitian()
        assert not hb.annihilation(space).is_hermitian()
        u = (1j * n).expm()
        assert u.is_unitary()
        assert not (0.5 * u).is_unitary()


class TestCoherentStates:
    def test_matches_series_oracle(self):
        space = hb.fock_space(60)
        alpha = 1.3 - 0.7j
        psi = hb.coherent_ket(space, alpha)
        assert np.allclose(psi.vec, series_coherent(60, alpha), atol=1e-12)

    def test_is_annihilation_eigenstate(self):
        space = hb.fock_space(80)
        alpha = 2.0 + 1.0j
        psi = hb.coherent_ket(space, alpha)
        a = hb.annihilation(space)
        assert abs(hb.expectation(a, psi) - alpha) < 1e-8
        residual = a.mat @ psi.vec - alpha * psi.vec
        assert np.linalg.norm(residual) < 1e-6

    def test_displacement_of_vacuum_agrees(self):
        space = hb.fock_space(60)
        alpha = 1.1 + 0.4j
        via_series = hb.coherent_ket(space, alpha)
        via_displacement = hb.displacement(space, alpha) @ hb.vacuum(space)
        assert hb.fidelity(via_series, via_displacement) > 1.0 - 1e-10

    def test_amplitude_cap_enforced(self):
        with pytest.raises(ValueError, match="cutoff"):
            hb.coherent_ket(hb.fock_space(16), 2.1)
        with pytest.raises(ValueError, match="cutoff"):
            hb.displacement(hb.fock_space(16), 2.1)


class TestDisplacementAndSqueeze:
    def test_displacement_inverse(self):
        space = hb.fock_space(60)
        d = hb.displacement(space, 1.2 - 0.3j)
        dm = hb.displacement(space, -(1.2 - 0.3j))
        assert np.max(np.abs((d @ dm).mat - np.eye(space.dim))) < 1e-9

    def test_squeeze_inverse(self):
        space = hb.fock_space(80)
        s = hb.squeeze(space, 0.6)
        sm = hb.squeeze(space, -0.6)
        assert np.max(np.abs((s @ sm).mat - np.eye(space.dim))) < 1e-9

    def test_squeezed_vacuum_variances(self):
        # For S(r)|0> with r > 0 the X quadrature is squeezed:
        # Var X = exp(-2r)/4, Var P = exp(+2r)/4.
        space = hb.fock_space(80)
        r = abs(math.log(0.19)) / 4  # 0.415182826905503
        psi = hb.squeeze(space, r) @ hb.vacuum(space)
        _, _, vx, vp, cov = ket_quadrature_moments(psi)
        assert abs(vx - math.exp(-2 * r) / 4) < 1e-8
        assert abs(vp - math.exp(2 * r) / 4) < 1e-8
        assert abs(cov) < 1e-10
        # this r corresponds to (1/4)|ln 0.19|, giving sqrt(0.19)/4
        assert abs(vx - math.sqrt(0.19) / 4) < 1e-8
        assert abs(vx - 0.108972473588517) < 1e-9

    def test_pure_gaussian_saturates_heisenberg(self):
        space = hb.fock_space(80)
        psi = hb.squeeze(space, 0.5) @ (hb.displacement(space, 0.8) @ hb.vacuum(space))
        _, _, vx, vp, cov = ket_quadrature_moments(psi)
        assert abs((vx * vp - cov ** 2) - 1.0 / 16.0) < 1e-8

    def test_squeeze_parameter_cap(self):
        with pytest.raises(ValueError, match="cutoff"):
            hb.squeeze(hb.fock_space(20), 0.8)


class TestSpinOperators:
    def test_requires_at_least_two_levels(self):
        with pytest.raises(ValueError, match="spin_dim"):
            hb.spin_operators(1)

    def test_jz_eigenvalues_three_levels(self):
        ops = hb.spin_operators(3)
        vals, _ = ops.jz.eigh()
        assert np.allclose(vals, [-1.0, 0.0, 1.0], atol=1e-13)

    def test_pauli_identities(self):
        ops = hb.spin_operators(2)
        assert np.allclose(ops.sigma_x.mat, (ops.sigma_plus + ops.sigma_minus).mat)
        assert np.allclose(ops.sigma_z.mat, np.diag([-1.0, 1.0]))
        comm = ops.sigma_x @ ops.sigma_y - ops.sigma_y @ ops.sigma_x
        assert np.allclose(comm.mat, 2j * ops.sigma_z.mat, atol=1e-13)

    def test_sigma_minus_lowers_excited(self):
        ops = hb.spin_operators(2)
        assert np.allclose(ops.sigma_minus.mat, np.array([[0, 1], [0, 0]]))

    def test_ladder_matrix_elements(self):
        ops = hb.spin_operators(4)  # j = 3/2
        expected = [math.sqrt(3), 2.0, math.sqrt(3)]
        off = np.diag(ops.jplus.mat, k=-1).real
        assert np.allclose(off, expected, atol=1e-13)


class TestCompositeSpaces:
    def test_embed_commutes_across_slots(self):
        f = hb.fock_space(8)
        s = hb.spin_space(2)
        comp = hb.tensor_space(f, s)
        a = hb.embed(hb.annihilation(f), comp, 0)
        sx = hb.embed(hb.spin_operators(2).sigma_x, comp, 1)
        assert np.allclose((a @ sx).mat, (sx @ a).mat, atol=1e-13)

    def test_embed_matches_explicit_kron(self):
        f = hb.fock_space(4)
        s = hb.spin_space(3)
        comp = hb.tensor_space(f, s)
        jz = hb.spin_operators(3).jz
        lifted = hb.embed(jz, comp, 1)
        assert np.allclose(lifted.mat, np.kron(np.eye(5), jz.mat))

    def test_partial_trace_of_product_state(self):
        f = hb.fock_space(12)
        s = hb.spin_space(2)
        psi_f = hb.coherent_ket(f, 0.9)
        psi_s = hb.Ket(np.array([1.0, 0.0]), hb.spin_space(2))
        joint = hb.tensor(psi_f, psi_s).to_density_matrix()
        back = hb.partial_trace(joint, keep=0)
        assert np.allclose(back.mat, psi_f.to_density_matrix().mat, atol=1e-12)
        spin_side = hb.partial_trace(joint, keep=1)
        assert np.allclose(spin_side.mat, np.diag([1.0, 0.0]), atol=1e-12)

    def test_partial_trace_preserves_trace(self):
        rng = np.random.default_rng(7)
        f, s = hb.fock_space(5), hb.spin_space(2)
        raw = rng.normal(size=(12, 12)) + 1j * rng.normal(size=(12, 12))
        rho = raw @ raw.conj().T
        rho /= np.trace(rho).real
        dm = hb.DensityMatrix(rho, hb.tensor_space(f, s))
        assert abs(hb.partial_trace(dm, 0).mat.trace() - 1.0) < 1e-12


class TestStateValidation:
    def test_ket_norm_tolerance(self):
        space = hb.fock_space(4)
        vec = np.zeros(5, dtype=complex)
        vec[0] = 1.0 + 1e-6
        with pytest.raises(ValueError, match="norm"):
            hb.Ket(vec, space)
        hb.Ket(vec, space, normalize=True)  # explicit normalization accepted

    def test_density_matrix_trace_tolerance(self):
        space = hb.fock_space(3)
        with pytest.raises(ValueError, match="trace"):
            hb.DensityMatrix(np.diag([0.5, 0.5, 0.1, 0.0]), space)

    def test_density_matrix_hermiticity(self):
        space = hb.fock_space(3)
        mat = np.diag([1.0, 0.0, 0.0, 0.0]).astype(complex)
        mat[0, 1] = 1e-3
        with pytest.raises(ValueError, match="Hermitian"):
            hb.DensityMatrix(mat, space)

    def test_positivity_monitor(self):
        space = hb.fock_space(1)
        dm = hb.DensityMatrix(np.diag([1.2, -0.2]), space)
        with pytest.raises(ValueError, match="negative"):
            dm.check_positive()


class TestTruncationPolicy:
    def test_clean_state_passes_silently(self):
        space = hb.fock_space(40)
        psi = hb.coherent_ket(space, 1.0)
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            weight = hb.check_truncation(psi)
        assert weight < 1e-12

    def test_warning_band(self):
        space = hb.fock_space(10)
        vec = np.zeros(11, dtype=complex)
        vec[0] = math.sqrt(1 - 1e-5)
        vec[10] = math.sqrt(1e-5)
        psi = hb.Ket(vec, space, normalize=True)
        with pytest.warns(RuntimeWarning, match="Fock levels"):
            hb.check_truncation(psi)

    def test_failure_band(self):
        space = hb.fock_space(10)
        vec = np.zeros(11, dtype=complex)
        vec[0] = math.sqrt(1 - 5e-3)
        vec[10] = math.sqrt(5e-3)
        psi = hb.Ket(vec, space, normalize=True)
        with pytest.raises(hb.TruncationError):
            hb.check_truncation(psi)

    def test_composite_state_reduces_over_spin(self):
        f = hb.fock_space(10)
        comp_vec = np.zeros(22, dtype=complex)
        comp_vec[21] = 1.0  # top Fock level, excited spin
        psi = hb.Ket(comp_vec, hb.tensor_space(f, hb.spin_space(2)))
        with pytest.raises(hb.TruncationError):
            hb.check_truncation(psi)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(min_value=0, max_value=10 ** 6))
def test_uncertainty_product_bounded_below(seed):
    """Heisenberg floor Var X * Var P - Cov^2 >= 1/16 on random pure states."""
    rng = np.random.default_rng(seed)
    space = hb.fock_space(14)
    vec = rng.normal(size=15) + 1j * rng.normal(size=15)
    psi = hb.Ket(vec, space, normalize=True)
    _, _, vx, vp, cov = ket_quadrature_moments(psi)
    assert vx * vp - cov ** 2 >= 1.0 / 16.0 - 1e-9


@settings(max_examples=25, deadline=None)
@given(
    re=st.floats(min_value=-1.5, max_value=1.5),
    im=st.floats(min_value=-1.5, max_value=1.5),
)
def test_displacement_shifts_mean(re, im):
    space = hb.fock_space(60)
    alpha = complex(re, im)
    psi = hb.displacement(space, alpha) @ hb.vacuum(space)
    mx, mp, vx, vp, _ = ket_quadrature_moments(psi)
    assert abs(mx - alpha.real) < 1e-9
    assert abs(mp - alpha.imag) < 1e-9
    assert abs(vx - 0.25) < 1e-9
    assert abs(vp - 0.25) < 1e-9
