"""
Locally-Gibbs correlated chain states and their thermodynamic observables.

Temperatures are carried as ``kT`` in the same unit as the excitation energy
``epsilon`` (Boltzmann's constant is 1). Entropies are in nats.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Sequence

import numpy as np

from .densemat import (
    HERMITIAN_TOL,
    SIGMA_X,
    SIGMA_Y,
    SIGMA_Z,
    as_cmatrix,
    dagger,
    herm_eig,
    kron_all,
    num_qubits_of,
    partial_trace,
)
from .exceptions import ContractError, DomainError, LGCError, PositivityError

TRACE_TOL = 1e-10
PSD_TOL = 1e-9
LGC_TOL = 1e-8
EIG_CLAMP = 1e-14

#: signed kT reported for an exactly maximally mixed qubit
INFINITE_TEMPERATURE = math.inf
#: signed kT reported for a qubit with an empty excited level
ZERO_TEMPERATURE = 0.0


@dataclass(frozen=True)
class EnergyScale:
    """Excitation energy of one qubit (``h * nu0``); ``k_B`` is fixed to 1."""

    epsilon: float = 1.0

    def __post_init__(self):
        if not self.epsilon > 0:
            raise DomainError(f"epsilon must be positive, got {self.epsilon}")


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """A validated qubit-register state.

    Construction checks Hermiticity (1e-10), unit trace (1e-10) and a minimum
    eigenvalue of at least -1e-9.
    """

    num_qubits: int
    mat: np.ndarray = field(repr=False)

    def __post_init__(self):
        m = as_cmatrix(self.mat)
        if m.shape[0] != 1 << self.num_qubits:
            raise ContractError(
                f"matrix dimension {m.shape[0]} does not match {self.num_qubits} qubits"
            )
        if np.max(np.abs(m - dagger(m))) > HERMITIAN_TOL:
            raise ContractError("density matrix is not Hermitian")
        tr = np.trace(m).real
        if abs(tr - 1.0) > TRACE_TOL:
            raise ContractError(f"density matrix trace is {tr}, not 1")
        lam_min = herm_eig(m).eigenvalues[0]
        if lam_min < -PSD_TOL:
            raise PositivityError(
                f"density matrix has negative eigenvalue {lam_min:.3e}", bound=lam_min
            )
        m = m.copy()
        m.setflags(write=False)
        object.__setattr__(self, "mat", m)

    @classmethod
    def from_matrix(cls, m) -> "DensityMatrix":
        m = np.asarray(m, dtype=complex)
        return cls(num_qubits_of(m), m)

    def reduce(self, keep: Sequence[int]) -> "DensityMatrix":
        """Reduced state on the strictly increasing qubit set ``keep``."""
        return DensityMatrix(len(keep), partial_trace(self.mat, self.num_qubits, keep))

    def populations(self) -> np.ndarray:
        return np.diag(self.mat).real.copy()

    def spectrum(self) -> np.ndarray:
        return herm_eig(self.mat).eigenvalues


@dataclass(frozen=True)
class ChainSpec:
    """Temperatures and nearest-neighbour correlation amplitudes of a chain."""

    temps: tuple
    alphas: tuple
    scale: EnergyScale = EnergyScale()

    def __post_init__(self):
        temps = tuple(float(t) for t in self.temps)
        alphas = tuple(complex(a) for a in self.alphas)
        if len(temps) < 2:
            raise ContractError("a chain needs at least two qubits")
        if len(alphas) != len(temps) - 1:
            raise ContractError(
                f"{len(temps)} temperatures need {len(temps) - 1} alphas, got {len(alphas)}"
            )
        if any(not t > 0 for t in temps):
            raise DomainError(f"temperatures must be positive, got {temps}")
        object.__setattr__(self, "temps", temps)
        object.__setattr__(self, "alphas", alphas)

    @property
    def n(self) -> int:
        return len(self.temps)


@dataclass(frozen=True)
class PairObservables:
    alpha: complex
    mutual_info: float
    gqd: float


def local_hamiltonian(scale: EnergyScale = EnergyScale()) -> np.ndarray:
    """Single-qubit Hamiltonian ``(epsilon/2)(1 - sigma_z) = diag(0, epsilon)``."""
    return 0.5 * scale.epsilon * (np.eye(2, dtype=complex) - SIGMA_Z)


def total_local_hamiltonian(num_qubits: int, scale: EnergyScale = EnergyScale()) -> np.ndarray:
    """Sum of the local Hamiltonians over every qubit of the register."""
    h = local_hamiltonian(scale)
    eye = np.eye(2, dtype=complex)
    out = np.zeros((1 << num_qubits, 1 << num_qubits), dtype=complex)
    for q in range(num_qubits):
        out += kron_all(*[h if k == q else eye for k in range(num_qubits)])
    return out


def gibbs_populations(kT: float, scale: EnergyScale = EnergyScale()) -> tuple[float, float]:
    if not kT > 0:
        raise DomainError(f"kT must be positive, got {kT}")
    boltz = math.exp(-scale.epsilon / kT)
    p0 = 1.0 / (1.0 + boltz)
    return p0, boltz * p0


def gibbs_qubit(kT: float, scale: EnergyScale = EnergyScale()) -> DensityMatrix:
    """Thermal state ``diag(p0, p1)`` with ``p1/p0 = exp(-epsilon/kT)``."""
    p0, p1 = gibbs_populations(kT, scale)
    return DensityMatrix(1, np.diag([p0, p1]).astype(complex))


def diagonal_qubit(p_excited: float) -> DensityMatrix:
    """Diagonal qubit state with the given excited population (may be inverted)."""
    if not 0.0 <= p_excited <= 1.0:
        raise DomainError(f"population must lie in [0, 1], got {p_excited}")
    return DensityMatrix(1, np.diag([1.0 - p_excited, p_excited]).astype(complex))


def _diag_pops(rho: DensityMatrix) -> tuple[float, float]:
    if rho.num_qubits != 1:
        raise ContractError("expected a single-qubit state")
    if abs(rho.mat[0, 1]) > LGC_TOL:
        raise ContractError("expected a diagonal single-qubit state")
    return float(rho.mat[0, 0].real), float(rho.mat[1, 1].real)


def alpha_max(rho_i: DensityMatrix, rho_j: DensityMatrix) -> float:
    """Largest ``|alpha|`` for which the correlated pair stays positive."""
    p0, p1 = _diag_pops(rho_i)
    q0, q1 = _diag_pops(rho_j)
    return math.sqrt(max(p0 * q1 * p1 * q0, 0.0))


def correlation_term(alpha: complex) -> np.ndarray:
    """Traceless coherence between ``|01>`` and ``|10>`` with ``chi[2, 1] = alpha``."""
    chi = np.zeros((4, 4), dtype=complex)
    chi[2, 1] = alpha
    chi[1, 2] = np.conj(alpha)
    return chi


def pair_state(rho_i: DensityMatrix, rho_j: DensityMatrix, alpha: complex = 0.0) -> DensityMatrix:
    """Product of two diagonal qubit states plus the ``alpha`` coherence.

    Raises:
        PositivityError: if ``|alpha|`` exceeds :func:`alpha_max`; the error's
            ``bound`` attribute carries the admissible value.
    """
    bound = alpha_max(rho_i, rho_j)
    if abs(alpha) > bound * (1.0 + 1e-12) + 1e-15:
        raise PositivityError(
            f"|alpha| = {abs(alpha):.6g} exceeds the positivity bound {bound:.6g}", bound=bound
        )
    m = np.kron(rho_i.mat, rho_j.mat) + correlation_term(alpha)
    return DensityMatrix(2, m)


def _chain_matrix(locals_: Sequence[np.ndarray], alphas: Sequence[complex]) -> np.ndarray:
    n = len(locals_)
    product = kron_all(*locals_)
    out = -(n - 2) * product
    for i, a in enumerate(alphas):
        pair = np.kron(locals_[i], locals_[i + 1]) + correlation_term(a)
        factors = list(locals_[:i]) + [pair] + list(locals_[i + 2:])
        out = out + kron_all(*factors)
    return out


def chain_state(spec: ChainSpec) -> DensityMatrix:
    """Initial chain state with correlations only between neighbours.

    Each neighbouring pair contributes its correlated pair state embedded in
    the product of the remaining thermal qubits; the ``(N - 2)``-fold
    overcount of the bare product is then subtracted.

    Raises:
        PositivityError: if the joint state has a negative eigenvalue below
            ``-1e-9``; the error's ``bound`` is that eigenvalue.
    """
    locals_ = [gibbs_qubit(t, spec.scale).mat for t in spec.temps]
    m = _chain_matrix(locals_, spec.alphas)
    lam_min = herm_eig(m).eigenvalues[0]
    if lam_min < -PSD_TOL:
        raise PositivityError(
            f"chain state is not positive: minimum eigenvalue {lam_min:.6e}", bound=lam_min
        )
    return DensityMatrix(spec.n, m)


def product_state(populations: Sequence[float]) -> DensityMatrix:
    """Diagonal product state from per-qubit excited populations."""
    return DensityMatrix(
        len(populations), kron_all(*[diagonal_qubit(p).mat for p in populations])
    )


def local_product(rho: DensityMatrix) -> DensityMatrix:
    """Product of the single-qubit marginals of ``rho``."""
    return DensityMatrix(
        rho.num_qubits, kron_all(*[rho.reduce([q]).mat for q in range(rho.num_qubits)])
    )


def excited_population(rho: DensityMatrix, qubit: int) -> float:
    if not 0 <= qubit < rho.num_qubits:
        raise IndexError(f"qubit {qubit} out of range for {rho.num_qubits} qubits")
    n = rho.num_qubits
    d = np.diag(rho.mat).real
    bit = (np.arange(1 << n) >> (n - 1 - qubit)) & 1
    return float(d[bit == 1].sum())


def energy(rho: DensityMatrix, qubit: int, scale: EnergyScale = EnergyScale()) -> float:
    """Internal energy ``Tr[rho_i H_i] = epsilon * p1`` of one qubit."""
    return scale.epsilon * excited_population(rho, qubit)


def temperature(rho: DensityMatrix, qubit: int, scale: EnergyScale = EnergyScale()) -> float:
    """Signed ``kT`` of one qubit's reduced state.

    Returns ``INFINITE_TEMPERATURE`` for equal populations (within 1e-12) and
    ``ZERO_TEMPERATURE`` for an empty excited level. Inverted populations give
    a negative value.

    Raises:
        LGCError: if the reduced state has an off-diagonal entry above 1e-8.
    """
    red = rho.reduce([qubit]).mat
    if abs(red[0, 1]) > LGC_TOL:
        raise LGCError(
            f"qubit {qubit} coherence {abs(red[0, 1]):.3e} exceeds {LGC_TOL}; no temperature"
        )
    p0, p1 = float(red[0, 0].real), float(red[1, 1].real)
    if abs(p0 - p1) < 1e-12:
        return INFINITE_TEMPERATURE
    if p1 <= 0.0:
        return ZERO_TEMPERATURE
    if p0 <= 0.0:
        return -ZERO_TEMPERATURE
    return scale.epsilon / math.log(p0 / p1)


def _entropy_of_spectrum(w: np.ndarray) -> float:
    w = w[w > EIG_CLAMP]
    return float(-np.sum(w * np.log(w)))


def von_neumann_entropy(rho: DensityMatrix) -> float:
    """``-Tr[rho ln rho]`` in nats, with ``0 ln 0 = 0``."""
    return max(_entropy_of_spectrum(rho.spectrum()), 0.0)


def relative_entropy(rho: DensityMatrix, sigma: DensityMatrix) -> float:
    """Quantum relative entropy ``Tr[rho ln rho] - Tr[rho ln sigma]``.

    Returns ``math.inf`` when the support of ``rho`` is not contained in the
    support of ``sigma``.
    """
    if rho.num_qubits != sigma.num_qubits:
        raise ContractError("states act on different registers")
    w_r, v_r = herm_eig(rho.mat)
    w_s, v_s = herm_eig(sigma.mat)
    null = v_s[:, w_s <= EIG_CLAMP]
    if null.shape[1]:
        leak = np.real(np.trace(dagger(null) @ rho.mat @ null))
        if leak > EIG_CLAMP * rho.mat.shape[0]:
            return math.inf
    # Tr[rho ln sigma] = sum_ij lam_i |<r_i|s_j>|^2 ln mu_j over the supports
    overlap = np.abs(dagger(v_r) @ v_s) ** 2
    keep_s = w_s > EIG_CLAMP
    keep_r = w_r > EIG_CLAMP
    cross = float(
        np.sum(w_r[keep_r, None] * overlap[np.ix_(keep_r, keep_s)] * np.log(w_s[keep_s])[None, :])
    )
    self_term = float(np.sum(w_r[keep_r] * np.log(w_r[keep_r])))
    return self_term - cross


def mutual_information(rho: DensityMatrix, part_a: Sequence[int], part_b: Sequence[int]) -> float:
    """``S(rho_A) + S(rho_B) - S(rho_AB)`` for disjoint qubit sets.

    When ``part_a`` and ``part_b`` do not cover every qubit, the remaining
    qubits are traced out first.
    """
    a, b = sorted(set(part_a)), sorted(set(part_b))
    if not a or not b or set(a) & set(b):
        raise ContractError(f"partitions {part_a} and {part_b} must be non-empty and disjoint")
    both = sorted(a + b)
    if both[-1] >= rho.num_qubits or both[0] < 0:
        raise IndexError(f"partition index out of range for {rho.num_qubits} qubits")
    joint = rho if len(both) == rho.num_qubits else rho.reduce(both)
    pos = {q: k for k, q in enumerate(both)}
    s_a = von_neumann_entropy(joint.reduce([pos[q] for q in a]))
    s_b = von_neumann_entropy(joint.reduce([pos[q] for q in b]))
    return s_a + s_b - von_neumann_entropy(joint)


_PAULIS = (SIGMA_X, SIGMA_Y, SIGMA_Z)


def bloch_data(rho_pair: DensityMatrix) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Bloch vectors of both qubits and the 3x3 correlation tensor of a pair.

    ``t[i, j] = Tr[rho sigma_i (x) sigma_j]``.
    """
    if rho_pair.num_qubits != 2:
        raise ContractError(f"expected a two-qubit state, got {rho_pair.num_qubits} qubits")
    m = rho_pair.mat
    eye = np.eye(2)
    x = np.array([np.trace(m @ np.kron(s, eye)).real for s in _PAULIS])
    y = np.array([np.trace(m @ np.kron(eye, s)).real for s in _PAULIS])
    t = np.array([[np.trace(m @ np.kron(s, u)).real for u in _PAULIS] for s in _PAULIS])
    return x, y, t


def gqd(rho_pair: DensityMatrix, measured: int = 1) -> float:
    """Geometric quantum discord of a two-qubit state, normalized to ``[0, 1]``.

    With ``v`` the Bloch vector of the measured qubit and ``T`` the
    correlation tensor oriented so its rows belong to that qubit,
    ``D = (|v|^2 + |T|_F^2 - k_max) / 2`` where ``k_max`` is the largest
    eigenvalue of ``v v^T + T T^T``. The default measures the second qubit
    of the pair.
    """
    if measured not in (0, 1):
        raise ContractError(f"measured qubit must be 0 or 1, got {measured}")
    x, y, t = bloch_data(rho_pair)
    v, t = (x, t) if measured == 0 else (y, t.T)
    k_max = np.linalg.eigvalsh(np.outer(v, v) + t @ t.T)[-1]
    return max(0.5 * float(v @ v + np.sum(t * t) - k_max), 0.0)


def pair_observables(rho: DensityMatrix, i: int, j: int) -> PairObservables:
    pair = rho.reduce(sorted((i, j)))
    return PairObservables(
        alpha=complex(pair.mat[2, 1]),
        mutual_info=mutual_information(pair, [0], [1]),
        gqd=gqd(pair),
    )


def pair_alpha(rho: DensityMatrix, i: int, j: int) -> complex:
    """The ``|10><01|`` entry of the ``(i, j)`` reduced state, ``i < j``."""
    return complex(partial_trace(rho.mat, rho.num_qubits, [i, j])[2, 1])


def extract_alphas(rho: DensityMatrix) -> tuple[list[complex], list[complex]]:
    """Correlation amplitudes of adjacent pairs and of all non-adjacent pairs.

    Non-adjacent pairs are listed in lexicographic order, so for three qubits
    the second list holds only the ``(0, 2)`` amplitude.
    """
    n = rho.num_qubits
    adjacent = [pair_alpha(rho, i, i + 1) for i in range(n - 1)]
    distant = [pair_alpha(rho, i, j) for i, j in combinations(range(n), 2) if j - i > 1]
    return adjacent, distant
