import math

import numpy as np
import pytest

from paritysim import fock
from paritysim.errors import OrderTooHigh, VacuumState, ZeroOddCat


def coherent_amplitudes_oracle(alpha, dim):
    """Independent expansion <n|alpha> = e^{-|a|^2/2} a^n / sqrt(n!)."""
    return np.array(
        [
            math.exp(-0.5 * abs(alpha) ** 2) * alpha**n / math.sqrt(math.factorial(n))
            for n in range(dim)
        ],
        dtype=complex,
    )


class TestOperators:
    def test_annihilation_two_levels(self):
        a = fock.annihilation(fock.FockSpace(n_max=1))
        assert np.array_equal(a, np.array([[0, 1], [0, 0]], dtype=complex))

    def test_annihilation_sqrt_two_entry(self):
        a = fock.annihilation(fock.FockSpace(n_max=2))
        assert a[1, 2] == pytest.approx(math.sqrt(2))

    def test_number_operator_diagonal(self, sim_space):
        a = fock.annihilation(sim_space)
        nop = a.conj().T @ a
        assert np.allclose(np.diag(nop).real, np.arange(sim_space.dim))

    def test_parity_eigenvalues(self, sim_space):
        p = fock.parity_operator(sim_space)
        assert p[0, 0] == 1.0
        assert p[1, 1] == -1.0
        assert np.allclose(np.diag(p), (-1.0) ** np.arange(sim_space.dim))


class TestDisplacement:
    def test_zero_displacement_is_identity(self, sim_space):
        assert np.allclose(fock.displacement(0.0, sim_space), np.eye(sim_space.dim))

    def test_displaced_vacuum_is_coherent(self, sim_space):
        d = fock.displacement(1.0, sim_space)
        column = d[:, 0]
        assert np.allclose(column, coherent_amplitudes_oracle(1.0, sim_space.dim), atol=1e-12)
        head = math.exp(-0.5) * np.array([1.0, 1.0, 1.0 / math.sqrt(2), 1.0 / math.sqrt(6)])
        assert np.allclose(column[:4].real, head, atol=1e-12)

    @pytest.mark.parametrize("alpha", [0.3, 1.0, 1.5, 0.7 + 1.2j, -1.1 + 0.4j])
    def test_unitarity_on_padded_space(self, alpha):
        # n_max=20 with pad=10 -> 31 working levels.
        dim = 31
        prod = fock.displacement_matrix(alpha, dim) @ fock.displacement_matrix(-alpha, dim)
        assert np.max(np.abs(prod - np.eye(dim))) < 1e-8

    def test_displacement_covariance_of_mean_field(self, sim_space):
        rho = fock.coherent_state(0.4 + 0.1j, sim_space).density()
        before = fock.moment(rho, 0, 1)
        for beta in (0.5, -0.3 + 0.8j, 1.0j):
            shifted = fock.displace_state(rho, beta)
            assert fock.moment(shifted, 0, 1) == pytest.approx(before + beta, abs=1e-6)


class TestStates:
    def test_coherent_zero_is_vacuum(self, sim_space):
        ket = fock.coherent_state(0.0, sim_space)
        assert ket.amplitudes[0] == pytest.approx(1.0)
        assert np.allclose(ket.amplitudes[1:], 0.0)

    def test_coherent_vacuum_weight(self, sim_space):
        ket = fock.coherent_state(1.06, sim_space)
        assert abs(ket.amplitudes[0]) ** 2 == pytest.approx(math.exp(-1.06**2), abs=1e-12)

    def test_coherent_mean_field(self, sim_space):
        for alpha in (0.8, 1.0 - 0.5j):
            rho = fock.coherent_state(alpha, sim_space).density()
            assert fock.moment(rho, 0, 1) == pytest.approx(alpha, abs=1e-6)

    def test_cat_normalization_closed_form(self, sim_space):
        amps = coherent_amplitudes_oracle(1.06, sim_space.dim)
        amps_minus = coherent_amplitudes_oracle(-1.06, sim_space.dim)
        norm_sq = np.linalg.norm(amps + amps_minus) ** 2
        assert norm_sq == pytest.approx(2.0 * (1.0 + math.exp(-2.0 * 1.06**2)), abs=1e-10)
        assert norm_sq == pytest.approx(2.2114, abs=1e-4)
        assert fock.cat_normalization_sq(1.06, +1) == pytest.approx(norm_sq, abs=1e-10)

    def test_even_cat_small_amplitude_limit(self, sim_space):
        ket = fock.cat_state(1e-8, +1, sim_space)
        assert abs(ket.amplitudes[0]) == pytest.approx(1.0, abs=1e-12)

    def test_cat_parity_support(self, sim_space):
        even = fock.cat_state(1.06, +1, sim_space)
        odd = fock.cat_state(1.06, -1, sim_space)
        idx = np.arange(sim_space.dim)
        assert np.allclose(even.amplitudes[idx % 2 == 1], 0.0)
        assert np.allclose(odd.amplitudes[idx % 2 == 0], 0.0)

    @pytest.mark.parametrize("alpha", [0.8, 1.06])
    def test_cats_are_lowering_squared_eigenstates(self, sim_space, alpha):
        a = fock.annihilation(sim_space)
        for sign in (+1, -1):
            ket = fock.cat_state(alpha, sign, sim_space)
            residual = a @ a @ ket.amplitudes - alpha**2 * ket.amplitudes
            assert np.max(np.abs(residual)) < 1e-8

    def test_odd_cat_at_zero_rejected(self, sim_space):
        with pytest.raises(ZeroOddCat):
            fock.cat_state(0.0, -1, sim_space)

    def test_density_matrix_invariants_enforced(self):
        good = np.diag([0.5, 0.5, 0.0]).astype(complex)
        fock.DensityMatrix(good)
        with pytest.raises(ValueError):
            fock.DensityMatrix(np.diag([0.6, 0.5, 0.0]).astype(complex))  # trace
        with pytest.raises(ValueError):
            fock.DensityMatrix(np.diag([1.5, -0.5, 0.0]).astype(complex))  # negativity
        bad = good.copy()
        bad[0, 1] = 0.1
        with pytest.raises(ValueError):
            fock.DensityMatrix(bad)  # hermiticity


class TestWigner:
    def test_vacuum_origin(self, sim_space):
        rho = fock.fock_ket(0, sim_space).density()
        assert fock.wigner_point(rho, 0.0) == pytest.approx(1.0, abs=1e-12)

    def test_single_photon_origin(self, sim_space):
        rho = fock.fock_ket(1, sim_space).density()
        assert fock.wigner_point(rho, 0.0) == pytest.approx(-1.0, abs=1e-12)

    def test_coherent_gaussian_oracle_on_grid(self, sim_space):
        # Sign convention anchor: pi/2 W(alpha) = exp(-2|beta - alpha|^2).
        beta = 0.45 + 0.3j
        rho = fock.coherent_state(beta, sim_space).density()
        axis = np.linspace(-1.0, 1.0, 5)
        for x in axis:
            for y in axis:
                alpha = complex(x, y)
                expected = math.exp(-2.0 * abs(beta - alpha) ** 2)
                assert fock.wigner_point(rho, alpha) == pytest.approx(expected, abs=1e-6)

    def test_superposition_lobes_closed_form(self, sim_space):
        rho = fock.photon_superposition(math.pi / 2, sim_space).density()
        for alpha in (0.0, 0.5, -0.5, 0.3 + 0.4j, -1.0):
            expected = math.exp(-2.0 * abs(alpha) ** 2) * (
                2.0 * abs(alpha) ** 2 + 2.0 * (alpha.real if isinstance(alpha, complex) else alpha)
            )
            assert fock.wigner_point(rho, alpha) == pytest.approx(expected, abs=1e-8)

    def test_parity_expectation_is_alternating_population_sum(self, sim_space):
        rho = fock.coherent_state(0.9, sim_space).density()
        explicit = sum((-1.0) ** n * rho.populations[n] for n in range(sim_space.dim))
        assert fock.parity_expectation(rho) == pytest.approx(explicit, abs=1e-15)
        assert fock.wigner_point(rho, 0.0) == pytest.approx(explicit, abs=1e-10)

    @pytest.mark.parametrize(
        "make_state",
        [
            lambda sp: fock.fock_ket(1, sp),
            lambda sp: fock.cat_state(1.06, +1, sp),
            lambda sp: fock.photon_superposition(2.0, sp),
        ],
    )
    def test_grid_normalization_within_two_percent(self, sim_space, make_state):
        rho = make_state(sim_space).density()
        axis = np.linspace(-3.0, 3.0, 41)
        step = axis[1] - axis[0]
        total = 0.0
        for x in axis:
            for y in axis:
                total += fock.wigner_point(rho, complex(x, y))
        integral = total * step * step * 2.0 / math.pi
        assert integral == pytest.approx(1.0, abs=0.02)


class TestMoments:
    def test_coherent_moments(self, sim_space):
        alpha = 0.8 + 0.3j
        rho = fock.coherent_state(alpha, sim_space).density()
        for n, m in [(0, 1), (1, 0), (1, 1), (2, 1), (2, 2)]:
            expected = np.conj(alpha) ** n * alpha**m
            assert fock.moment(rho, n, m) == pytest.approx(expected, abs=1e-8)

    def test_single_photon_number(self, sim_space):
        rho = fock.fock_ket(1, sim_space).density()
        assert fock.moment(rho, 1, 1) == pytest.approx(1.0)

    def test_even_cat_odd_moments_vanish(self, sim_space):
        rho = fock.cat_state(1.06, +1, sim_space).density()
        for n, m in [(0, 1), (1, 0), (0, 3), (2, 1), (1, 2)]:
            assert abs(fock.moment(rho, n, m)) < 1e-12

    def test_order_guard(self, recon_space):
        rho = fock.fock_ket(0, recon_space).density()
        with pytest.raises(OrderTooHigh):
            fock.moment(rho, 3, 3)


class TestG2:
    def test_coherent_is_poissonian(self, sim_space):
        rho = fock.coherent_state(1.0, sim_space).density()
        assert fock.g2(rho) == pytest.approx(1.0, abs=1e-9)

    def test_odd_cat_antibunched(self, sim_space):
        nbar = 0.5
        rho = fock.cat_state(math.sqrt(nbar), -1, sim_space).density()
        assert fock.g2(rho) == pytest.approx(math.tanh(nbar) ** 2, abs=1e-8)
        assert fock.g2(rho) == pytest.approx(0.2136, abs=5e-4)

    def test_even_cat_bunched(self, sim_space):
        nbar = 0.35
        rho = fock.cat_state(math.sqrt(nbar), +1, sim_space).density()
        assert fock.g2(rho) == pytest.approx(1.0 / math.tanh(nbar) ** 2, abs=1e-6)
        assert fock.g2(rho) == pytest.approx(8.8, abs=0.05)

    @pytest.mark.parametrize("n", [2, 3, 4, 6])
    def test_fock_states(self, sim_space, n):
        rho = fock.fock_ket(n, sim_space).density()
        assert fock.g2(rho) == pytest.approx((n - 1) / n, abs=1e-10)

    def test_vacuum_rejected(self, sim_space):
        with pytest.raises(VacuumState):
            fock.g2(fock.fock_ket(0, sim_space).density())


class TestFidelity:
    def test_self_fidelity(self, sim_space):
        rho = fock.cat_state(1.06, +1, sim_space).density()
        assert fock.fidelity(rho, rho) == pytest.approx(1.0, abs=1e-10)

    def test_orthogonal_states(self, sim_space):
        zero = fock.fock_ket(0, sim_space).density()
        one = fock.fock_ket(1, sim_space).density()
        assert fock.fidelity(zero, one) == pytest.approx(0.0, abs=1e-12)

    def test_pure_state_overlap(self, sim_space):
        psi = fock.coherent_state(0.7, sim_space)
        phi = fock.photon_superposition(1.1, sim_space)
        overlap = abs(np.vdot(psi.amplitudes, phi.amplitudes)) ** 2
        assert fock.fidelity(psi.density(), phi.density()) == pytest.approx(overlap, abs=1e-7)

    def test_symmetry(self, sim_space):
        a = fock.coherent_state(0.5, sim_space).density()
        mixed = fock.DensityMatrix(
            0.6 * fock.fock_ket(0, sim_space).density().entries
            + 0.4 * fock.fock_ket(2, sim_space).density().entries
        )
        assert fock.fidelity(a, mixed) == pytest.approx(fock.fidelity(mixed, a), abs=1e-8)
