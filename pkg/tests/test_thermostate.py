import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize

from spinchain.densemat import kron_all, herm_eig
from spinchain.exceptions import ContractError, DomainError, LGCError, PositivityError
from spinchain.thermostate import (
    INFINITE_TEMPERATURE,
    ZERO_TEMPERATURE,
    ChainSpec,
    DensityMatrix,
    EnergyScale,
    alpha_max,
    chain_state,
    correlation_term,
    diagonal_qubit,
    energy,
    extract_alphas,
    gibbs_qubit,
    gqd,
    local_hamiltonian,
    local_product,
    mutual_information,
    pair_observables,
    pair_state,
    product_state,
    relative_entropy,
    temperature,
    von_neumann_entropy,
)

from oracles import random_density

seeds = st.integers(min_value=0, max_value=2**32 - 1)
pops = st.floats(min_value=0.01, max_value=0.99)

P0_KT1 = 1.0 / (1.0 + math.exp(-1.0))  # 0.7310585786300049


def dm(m):
    return DensityMatrix.from_matrix(np.asarray(m, dtype=complex))


class TestDensityMatrix:
    def test_rejects_bad_trace(self):
        with pytest.raises(ContractError):
            DensityMatrix(1, np.diag([0.5, 0.6]))

    def test_rejects_non_hermitian(self):
        with pytest.raises(ContractError):
            DensityMatrix(1, np.array([[0.5, 0.1], [0.0, 0.5]]))

    def test_rejects_negative(self):
        with pytest.raises(PositivityError):
            DensityMatrix(1, np.diag([1.1, -0.1]))

    def test_immutable(self):
        rho = gibbs_qubit(1.0)
        with pytest.raises(ValueError):
            rho.mat[0, 0] = 0.0

    def test_dimension_mismatch(self):
        with pytest.raises(ContractError):
            DensityMatrix(2, np.eye(2) / 2)


class TestLocalHamiltonian:
    def test_unit(self):
        np.testing.assert_array_equal(local_hamiltonian(EnergyScale(1.0)), np.diag([0, 1]))

    def test_linear_in_epsilon(self):
        np.testing.assert_array_equal(local_hamiltonian(EnergyScale(2.0)), np.diag([0, 2]))

    @given(st.floats(min_value=1e-3, max_value=1e3))
    def test_spectrum(self, eps):
        w, _ = herm_eig(local_hamiltonian(EnergyScale(eps)))
        np.testing.assert_allclose(w, [0.0, eps], atol=1e-12 * eps)

    def test_non_positive_epsilon(self):
        with pytest.raises(DomainError):
            EnergyScale(0.0)


class TestGibbs:
    def test_infinite_temperature_limit(self):
        np.testing.assert_allclose(np.diag(gibbs_qubit(1e12).mat).real, [0.5, 0.5], atol=1e-9)

    def test_kt_equals_epsilon(self):
        assert abs(gibbs_qubit(1.0).mat[0, 0].real - 0.731059) < 1e-6

    def test_cold(self):
        assert abs(gibbs_qubit(0.1).mat[1, 1].real - 4.5397868702434395e-05) < 1e-12

    def test_ratio_with_scale(self):
        rho = gibbs_qubit(9.8, EnergyScale(2.0))
        p0, p1 = np.diag(rho.mat).real
        assert abs(p1 / p0 - math.exp(-2.0 / 9.8)) < 1e-14

    @pytest.mark.parametrize("kt", [0.0, -1.0])
    def test_non_positive(self, kt):
        with pytest.raises(DomainError):
            gibbs_qubit(kt)


class TestPairState:
    def test_uncorrelated_is_product(self):
        a, b = gibbs_qubit(2.0), gibbs_qubit(0.7)
        np.testing.assert_array_equal(pair_state(a, b).mat, np.kron(a.mat, b.mat))

    def test_entry_placement(self):
        a, b = gibbs_qubit(5.3, EnergyScale(2.0)), gibbs_qubit(4.5, EnergyScale(2.0))
        rho = pair_state(a, b, -0.097)
        assert rho.mat[2, 1] == -0.097
        assert rho.mat[1, 2] == -0.097
        np.testing.assert_allclose(rho.reduce([0]).mat, a.mat, atol=1e-15)
        np.testing.assert_allclose(rho.reduce([1]).mat, b.mat, atol=1e-15)
        assert pair_observables(dm(np.kron(a.mat, b.mat) + correlation_term(-0.097)), 0, 1).alpha == -0.097

    def test_complex_alpha_conjugate(self):
        a, b = gibbs_qubit(1.0), gibbs_qubit(1.0)
        rho = pair_state(a, b, 0.05 + 0.08j)
        assert rho.mat[1, 2] == np.conj(rho.mat[2, 1])

    def test_boundary_is_singular(self):
        a, b = gibbs_qubit(1.3), gibbs_qubit(0.6)
        lam = pair_state(a, b, alpha_max(a, b)).spectrum()
        assert abs(lam[0]) < 1e-10

    def test_positivity_error_carries_bound(self):
        a, b = gibbs_qubit(1.0), gibbs_qubit(1.0)
        with pytest.raises(PositivityError) as err:
            pair_state(a, b, 0.3)
        assert abs(err.value.bound - alpha_max(a, b)) < 1e-15


class TestAlphaMax:
    def test_maximally_mixed(self):
        half = diagonal_qubit(0.5)
        assert abs(alpha_max(half, half) - 0.25) < 1e-15

    def test_pure(self):
        assert alpha_max(diagonal_qubit(0.0), diagonal_qubit(0.4)) == 0.0

    @given(pops, pops)
    @settings(max_examples=50, deadline=None)
    def test_eigenvalue_sweep(self, p, q):
        a, b = diagonal_qubit(p), diagonal_qubit(q)
        bound = alpha_max(a, b)
        prod = np.kron(a.mat, b.mat)
        below = np.linalg.eigvalsh(prod + correlation_term(0.9999 * bound))
        above = np.linalg.eigvalsh(prod + correlation_term(1.0001 * bound))
        assert below[0] >= -1e-15
        assert above[0] < 0


def literal_chain(locals_, alphas):
    """Independent term-by-term expansion of the correlated chain mixture."""
    n = len(locals_)
    total = np.zeros((1 << n, 1 << n), dtype=complex)
    for i in range(n - 1):
        left = [locals_[k] for k in range(i)]
        right = [locals_[k] for k in range(i + 2, n)]
        pair = np.kron(locals_[i], locals_[i + 1]) + correlation_term(alphas[i])
        factors = left + [pair] + right
        term = factors[0]
        for f in factors[1:]:
            term = np.kron(term, f)
        total += term
    prod = locals_[0]
    for f in locals_[1:]:
        prod = np.kron(prod, f)
    return total - (n - 2) * prod


class TestChainState:
    def test_uncorrelated_product(self):
        temps = (9.8, 5.0, 2.0)
        sc = EnergyScale(2.0)
        rho = chain_state(ChainSpec(temps, (0, 0), sc))
        expect = kron_all(*[gibbs_qubit(t, sc).mat for t in temps])
        np.testing.assert_allclose(rho.mat, expect, atol=1e-15)

    def test_two_qubits_is_pair_state(self):
        a, b = gibbs_qubit(2.0), gibbs_qubit(1.0)
        rho = chain_state(ChainSpec((2.0, 1.0), (-0.1,)))
        np.testing.assert_allclose(rho.mat, pair_state(a, b, -0.1).mat, atol=1e-15)

    def test_reversal_readback(self):
        spec = ChainSpec((5.3, 4.5, 3.2), (-0.097, -0.071), EnergyScale(2.0))
        adjacent, distant = extract_alphas(chain_state(spec))
        np.testing.assert_allclose(adjacent, [-0.097, -0.071], atol=1e-15)
        assert distant == [0]

    def test_four_qubit_literal(self):
        temps = (3.0, 2.0, 1.5, 1.0)
        alphas = (-0.05, 0.03, -0.02)
        rho = chain_state(ChainSpec(temps, alphas))
        lit = literal_chain([gibbs_qubit(t).mat for t in temps], alphas)
        assert np.max(np.abs(rho.mat - lit)) < 1e-14

    def test_joint_positivity_error(self):
        # each pair is admissible but the mixture is not
        with pytest.raises(PositivityError) as err:
            chain_state(ChainSpec((1.0, 1.0, 1.0), (-0.196, -0.196)))
        assert err.value.bound < 0

    def test_spec_validation(self):
        with pytest.raises(ContractError):
            ChainSpec((1.0, 2.0, 3.0), (0.0,))
        with pytest.raises(DomainError):
            ChainSpec((1.0, -2.0), (0.0,))

    @given(
        st.lists(st.floats(0.5, 20.0), min_size=2, max_size=4),
        st.lists(st.floats(-0.5, 0.5), min_size=3, max_size=3),
    )
    @settings(max_examples=40, deadline=None)
    def test_invariants(self, temps, fracs):
        sc = EnergyScale(2.0)
        locals_ = [gibbs_qubit(t, sc) for t in temps]
        alphas = [
            f * alpha_max(locals_[i], locals_[i + 1]) for i, f in enumerate(fracs[: len(temps) - 1])
        ]
        rho = chain_state(ChainSpec(tuple(temps), tuple(alphas), sc))
        assert abs(np.trace(rho.mat) - 1) < 1e-12
        assert rho.spectrum()[0] >= -1e-9
        for q, g in enumerate(locals_):
            np.testing.assert_allclose(rho.reduce([q]).mat, g.mat, atol=1e-12)
        for i in range(len(temps) - 1):
            pair = rho.reduce([i, i + 1]).mat
            chi = pair - np.kron(locals_[i].mat, locals_[i + 1].mat)
            assert abs(np.trace(chi)) < 1e-14
            np.testing.assert_allclose(chi, correlation_term(alphas[i]), atol=1e-14)
        adjacent, distant = extract_alphas(rho)
        np.testing.assert_allclose(adjacent, alphas, atol=1e-14)
        np.testing.assert_allclose(distant, 0, atol=1e-14)


class TestEnergyTemperature:
    def test_energy_limits(self):
        assert energy(diagonal_qubit(0.5), 0) == 0.5
        assert energy(diagonal_qubit(0.0), 0) == 0.0
        assert abs(energy(gibbs_qubit(1.0), 0) - 0.2689414213699951) < 1e-15

    def test_energy_uses_epsilon(self):
        assert abs(energy(gibbs_qubit(2.0, EnergyScale(2.0)), 0, EnergyScale(2.0)) - 2 * 0.2689414213699951) < 1e-14

    def test_temperature_inverse_of_gibbs(self):
        rho = dm(np.diag([0.731059, 0.268941]))
        assert abs(temperature(rho, 0) - 1.0) < 1e-5

    def test_infinite_marker(self):
        assert temperature(diagonal_qubit(0.5), 0) == INFINITE_TEMPERATURE

    def test_zero_marker(self):
        assert temperature(diagonal_qubit(0.0), 0) == ZERO_TEMPERATURE

    def test_inverted_is_negative(self):
        assert temperature(diagonal_qubit(0.7), 0) < 0

    def test_classical_row(self):
        sc = EnergyScale(2.0)
        rho = chain_state(ChainSpec((9.8, 5.0, 2.0), (0, 0), sc))
        assert abs(temperature(rho, 0, sc) - 9.8) < 1e-12

    def test_lgc_violation(self):
        rho = dm([[0.5, 0.1], [0.1, 0.5]])
        with pytest.raises(LGCError):
            temperature(rho, 0)

    @given(seeds)
    @settings(max_examples=30, deadline=None)
    def test_energy_bounds(self, seed):
        rho = dm(random_density(np.random.default_rng(seed), 8))
        for q in range(3):
            assert -1e-15 <= energy(rho, q, EnergyScale(2.0)) <= 2.0 + 1e-15


class TestEntropies:
    def test_pure(self):
        assert von_neumann_entropy(diagonal_qubit(0.0)) == 0.0

    def test_mixed(self):
        assert abs(von_neumann_entropy(diagonal_qubit(0.5)) - math.log(2)) < 1e-15

    def test_gibbs_value(self):
        rho = dm(np.diag([0.731059, 0.268941]))
        # -(p ln p + q ln q) = 0.731059*0.313262 + 0.268941*1.313262
        assert abs(von_neumann_entropy(rho) - 0.5822027) < 1e-6

    def test_relative_self(self):
        rho = gibbs_qubit(1.0)
        assert abs(relative_entropy(rho, rho)) < 1e-15

    def test_relative_value(self):
        r, s = diagonal_qubit(0.5), dm(np.diag([0.731059, 0.268941]))
        expect = 0.5 * math.log(0.5 / 0.731059) + 0.5 * math.log(0.5 / 0.268941)
        assert abs(relative_entropy(r, s) - expect) < 1e-12
        assert abs(expect - 0.1201) < 1e-3

    def test_relative_support_violation(self):
        assert relative_entropy(diagonal_qubit(0.5), diagonal_qubit(0.0)) == math.inf

    @given(seeds)
    @settings(max_examples=50, deadline=None)
    def test_klein(self, seed):
        rng = np.random.default_rng(seed)
        r = dm(random_density(rng, 4))
        s = dm(random_density(rng, 4))
        d = relative_entropy(r, s)
        assert d >= -1e-10
        if np.linalg.norm(r.mat - s.mat) > 1e-9:
            assert d > 0


class TestMutualInformation:
    def test_product(self):
        rho = product_state([0.2, 0.4])
        assert abs(mutual_information(rho, [0], [1])) < 1e-15

    def test_maximal_correlation(self):
        half = diagonal_qubit(0.5)
        rho = pair_state(half, half, 0.25)
        assert abs(mutual_information(rho, [0], [1]) - 0.5 * math.log(2)) < 1e-12
        assert abs(0.5 * math.log(2) - 0.3466) < 1e-4

    def test_overlap_rejected(self):
        with pytest.raises(ContractError):
            mutual_information(product_state([0.2, 0.4]), [0], [0, 1])

    def test_traces_spectator(self):
        rho = chain_state(ChainSpec((3.0, 2.0, 1.0), (-0.05, 0.0)))
        direct = mutual_information(rho.reduce([0, 1]), [0], [1])
        assert abs(mutual_information(rho, [0], [1]) - direct) < 1e-14

    def test_monotone_in_alpha(self):
        a, b = gibbs_qubit(2.0), gibbs_qubit(1.0)
        grid = np.linspace(0, alpha_max(a, b), 25)
        values = [mutual_information(pair_state(a, b, -x), [0], [1]) for x in grid]
        assert np.all(np.diff(values) > 0)


def measured_discord(rho, measured):
    """Twice the squared distance to the nearest post-measurement state.

    The measured qubit's projective basis is optimised directly over the
    Bloch sphere; this is the measurement-induced form of the geometric
    discord, independent of the Bloch-vector closed form.
    """
    m = np.asarray(rho.mat)
    eye = np.eye(2)
    pauli = [np.array([[0, 1], [1, 0]]), np.array([[0, -1j], [1j, 0]]), np.diag([1.0, -1.0])]

    def cost(angles):
        th, ph = angles
        n = [math.sin(th) * math.cos(ph), math.sin(th) * math.sin(ph), math.cos(th)]
        proj = 0.5 * (eye + sum(c * p for c, p in zip(n, pauli)))
        projs = [proj, eye - proj]
        lift = [np.kron(p, eye) if measured == 0 else np.kron(eye, p) for p in projs]
        post = sum(p @ m @ p for p in lift)
        return float(np.linalg.norm(m - post) ** 2)

    starts = [(t, p) for t in np.linspace(0.1, 3.0, 6) for p in np.linspace(0, 6.0, 6)]
    best = min(starts, key=cost)
    res = minimize(cost, best, method="Nelder-Mead", options={"xatol": 1e-12, "fatol": 1e-16, "maxiter": 4000})
    return 2 * res.fun


class TestDiscord:
    def test_product_zero(self):
        assert gqd(product_state([0.3, 0.1])) == 0.0

    @pytest.mark.parametrize("measured", [0, 1])
    def test_measurement_oracle(self, measured):
        rng = np.random.default_rng(11 + measured)
        for _ in range(4):
            rho = dm(random_density(rng, 4))
            assert abs(gqd(rho, measured) - measured_discord(rho, measured)) < 1e-7

    def test_correlated_pair_oracle(self):
        a, b = gibbs_qubit(5.3, EnergyScale(2.0)), gibbs_qubit(4.5, EnergyScale(2.0))
        rho = pair_state(a, b, -0.097)
        assert abs(gqd(rho) - measured_discord(rho, 1)) < 1e-7

    def test_wrong_dimension(self):
        with pytest.raises(ContractError):
            gqd(product_state([0.1, 0.2, 0.3]))

    @given(seeds)
    @settings(max_examples=60, deadline=None)
    def test_non_negative(self, seed):
        rng = np.random.default_rng(seed)
        rho = dm(random_density(rng, 4, rank=int(rng.integers(1, 5))))
        assert gqd(rho) >= -1e-10
        assert mutual_information(rho, [0], [1]) >= -1e-10


class TestExtractAlphas:
    def test_round_trip(self):
        rho = chain_state(ChainSpec((3.0, 2.0, 1.0), (-0.05, 0.02)))
        adjacent, distant = extract_alphas(rho)
        np.testing.assert_allclose(adjacent, [-0.05, 0.02], atol=1e-15)
        np.testing.assert_allclose(distant, [0.0], atol=1e-15)

    @given(seeds)
    @settings(max_examples=30, deadline=None)
    def test_random_injection(self, seed):
        rng = np.random.default_rng(seed)
        p = rng.uniform(0.1, 0.9, 2)
        a, b = diagonal_qubit(p[0]), diagonal_qubit(p[1])
        alpha = complex(*rng.uniform(-1, 1, 2)) * alpha_max(a, b) * 0.5
        adjacent, distant = extract_alphas(pair_state(a, b, alpha))
        assert abs(adjacent[0] - alpha) < 1e-14
        assert distant == []

    def test_local_product(self):
        rho = chain_state(ChainSpec((3.0, 2.0), (-0.1,)))
        np.testing.assert_allclose(local_product(rho).mat, np.kron(gibbs_qubit(3.0).mat, gibbs_qubit(2.0).mat), atol=1e-15)
