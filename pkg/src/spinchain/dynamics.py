"""
Dzyaloshinskii-Moriya chain dynamics and heat-flow bookkeeping.

Time is measured in units of ``1/coupling`` with ``hbar = 1``; the physical
prefactor ``(h/2) J`` is folded into ``coupling``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Callable, Sequence

import numpy as np

from .densemat import SIGMA_X, SIGMA_Y, SIGMA_Z, dagger, embed, func_herm, herm_eig
from .exceptions import ContractError
from .thermostate import (
    DensityMatrix,
    EnergyScale,
    energy,
    extract_alphas,
    gqd,
    local_product,
    mutual_information,
    relative_entropy,
    temperature,
    total_local_hamiltonian,
)

DM_PAIR_GENERATOR = np.kron(SIGMA_X, SIGMA_Y) - np.kron(SIGMA_Y, SIGMA_X)


@dataclass(frozen=True, eq=False)
class DMChainHamiltonian:
    """Nearest-neighbour DM Hamiltonian on an ``n``-qubit chain."""

    n: int
    coupling: float
    mat: np.ndarray = field(repr=False)


def dm_pair_hamiltonian(coupling: float = 1.0) -> DMChainHamiltonian:
    """``coupling * (sigma_x (x) sigma_y - sigma_y (x) sigma_x)``.

    Only the ``{|01>, |10>}`` block is non-zero: ``H[1, 2] = 2i * coupling``.
    """
    return DMChainHamiltonian(2, float(coupling), coupling * DM_PAIR_GENERATOR)


def dm_chain_hamiltonian(n: int, coupling: float = 1.0) -> DMChainHamiltonian:
    """Sum of the pair term over every neighbouring pair ``(i, i+1)``."""
    if n < 2:
        raise ContractError(f"a chain needs at least two qubits, got {n}")
    pair = coupling * DM_PAIR_GENERATOR
    mat = sum(embed(pair, [i, i + 1], n) for i in range(n - 1))
    return DMChainHamiltonian(n, float(coupling), np.asarray(mat))


def excitation_number(n: int) -> np.ndarray:
    """Total ``sigma_z`` of the register."""
    return sum(embed(SIGMA_Z, [q], n) for q in range(n))


class Propagator:
    """Caches the spectral decomposition of a Hamiltonian for repeated evolution."""

    def __init__(self, h: DMChainHamiltonian):
        self.h = h
        self._w, self._v = herm_eig(h.mat)

    def __call__(self, tau: float) -> np.ndarray:
        return (self._v * np.exp(-1j * tau * self._w)) @ dagger(self._v)


def propagator(h: DMChainHamiltonian, tau: float) -> np.ndarray:
    """``U = exp(-i tau H)``."""
    return func_herm(h.mat, lambda w: np.exp(-1j * tau * w))


def evolve(rho0: DensityMatrix, h: DMChainHamiltonian, tau: float) -> DensityMatrix:
    """``U rho0 U^dagger`` for the propagator of ``h`` at time ``tau``."""
    if rho0.num_qubits != h.n:
        raise ContractError(f"state has {rho0.num_qubits} qubits, Hamiltonian has {h.n}")
    u = propagator(h, tau)
    return DensityMatrix(h.n, u @ rho0.mat @ dagger(u))


def pair_labels(n: int) -> list[tuple[int, int]]:
    """Qubit pairs in reporting order: neighbours first, then the rest."""
    adjacent = [(i, i + 1) for i in range(n - 1)]
    return adjacent + [(i, j) for i, j in combinations(range(n), 2) if j - i > 1]


@dataclass
class Trajectory:
    """Per-time observables of an evolving chain.

    Every array has one row per entry of ``taus``. Pair-indexed arrays follow
    :func:`pair_labels`. ``states`` keeps the evolved density matrices.
    """

    taus: np.ndarray
    energies: np.ndarray
    temperatures: np.ndarray
    mutual_info: np.ndarray
    discord: np.ndarray
    alphas: np.ndarray
    pairs: list
    states: list = field(repr=False, default_factory=list)
    scale: EnergyScale = EnergyScale()

    @property
    def num_qubits(self) -> int:
        return self.energies.shape[1]

    @property
    def heats(self) -> np.ndarray:
        """``Q_i(tau) = U_i(tau) - U_i(tau_0)``."""
        return self.energies - self.energies[0]

    def __len__(self) -> int:
        return len(self.taus)


def observe(
    states: Sequence[DensityMatrix],
    taus: Sequence[float],
    scale: EnergyScale = EnergyScale(),
) -> Trajectory:
    """Assemble a :class:`Trajectory` from already evolved states."""
    n = states[0].num_qubits
    pairs = pair_labels(n)
    energies = np.array([[energy(r, q, scale) for q in range(n)] for r in states])
    temps = np.array([[temperature(r, q, scale) for q in range(n)] for r in states])
    mi = np.array([[mutual_information(r, [i], [j]) for i, j in pairs] for r in states])
    disc = np.array([[gqd(r.reduce([i, j])) for i, j in pairs] for r in states])
    alphas = []
    for r in states:
        adjacent, distant = extract_alphas(r)
        alphas.append(adjacent + distant)
    return Trajectory(
        taus=np.asarray(taus, dtype=float),
        energies=energies,
        temperatures=temps,
        mutual_info=mi,
        discord=disc,
        alphas=np.array(alphas, dtype=complex),
        pairs=pairs,
        states=list(states),
        scale=scale,
    )


def _check_grid(taus) -> np.ndarray:
    taus = np.asarray(taus, dtype=float)
    if taus.ndim != 1 or taus.size == 0:
        raise ContractError("tau grid must be a non-empty 1-D sequence")
    if np.any(np.diff(taus) <= 0):
        raise ContractError("tau grid must be strictly ascending")
    return taus


def sweep(
    rho0: DensityMatrix,
    h: DMChainHamiltonian,
    taus,
    scale: EnergyScale = EnergyScale(),
    evolver: Callable[[float], np.ndarray] | None = None,
) -> Trajectory:
    """Evolve ``rho0`` over a tau grid and record every observable.

    Args:
        rho0: initial state.
        h: chain Hamiltonian.
        taus: strictly ascending grid of times.
        scale: energy unit for energies and temperatures.
        evolver: optional ``tau -> unitary`` map replacing the exact
            propagator (used by the compiled-circuit backend).
    """
    taus = _check_grid(taus)
    if rho0.num_qubits != h.n:
        raise ContractError(f"state has {rho0.num_qubits} qubits, Hamiltonian has {h.n}")
    step = evolver if evolver is not None else Propagator(h)
    states = []
    for tau in taus:
        u = step(float(tau))
        states.append(DensityMatrix(h.n, u @ rho0.mat @ dagger(u)))
    return observe(states, taus, scale)


def default_grid(points: int = 101, stop: float = math.pi) -> np.ndarray:
    return np.linspace(0.0, stop, points)


def initial_directions(traj: Trajectory, tol: float = 1e-12) -> list[int]:
    """Sign of each qubit's energy change over the first grid step.

    ``-1`` means the qubit gives heat away, ``+1`` that it absorbs heat, ``0``
    that the change is below ``tol``.
    """
    if len(traj) < 2:
        raise ContractError("need at least two grid points for a direction")
    dq = traj.energies[1] - traj.energies[0]
    return [0 if abs(d) <= tol else int(np.sign(d)) for d in dq]


def central_derivative(traj: Trajectory, index: int = 0) -> np.ndarray:
    """Energy derivative at ``taus[index]`` by central differences.

    At the ends of the grid a one-sided difference is used instead.
    """
    taus, e = traj.taus, traj.energies
    if index == 0:
        return (e[1] - e[0]) / (taus[1] - taus[0])
    if index == len(taus) - 1:
        return (e[-1] - e[-2]) / (taus[-1] - taus[-2])
    return (e[index + 1] - e[index - 1]) / (taus[index + 1] - taus[index - 1])


@dataclass(frozen=True)
class ClausiusRecord:
    tau: float
    heat: float
    beta_gap: float
    delta_mi: float

    @property
    def lhs(self) -> float:
        return self.heat * self.beta_gap

    @property
    def slack(self) -> float:
        """``Q_j (beta_j - beta_i) - Delta I(i:j)``; non-negative when the bound holds."""
        return self.lhs - self.delta_mi


def clausius_check(traj: Trajectory, pair: tuple[int, int]) -> tuple[list[ClausiusRecord], bool]:
    """Evaluate the correlation-corrected heat inequality along a trajectory.

    Inverse temperatures come from the initial state. For chains longer
    than two qubits the records are diagnostic only, flagged by the returned
    ``advisory`` boolean.
    """
    i, j = pair
    if abs(i - j) != 1:
        raise ContractError(f"pair {pair} is not adjacent")
    k = traj.pairs.index(tuple(sorted(pair)))
    beta = [1.0 / traj.temperatures[0, q] for q in (i, j)]
    heats = traj.heats[:, j]
    mi = traj.mutual_info[:, k]
    records = [
        ClausiusRecord(float(t), float(q), beta[1] - beta[0], float(m - mi[0]))
        for t, q, m in zip(traj.taus, heats, mi)
    ]
    return records, traj.num_qubits > 2


def nonadjacent_growth(traj: Trajectory) -> tuple[np.ndarray, np.ndarray]:
    """Magnitude of the end-to-end correlation and the largest stray coherence.

    Returns ``(|alpha_AC(tau)|, max_coherence(tau))`` where the second array
    is the largest off-diagonal magnitude of the state outside the
    single-excitation coherences between neighbouring pairs.
    """
    if traj.num_qubits != 3:
        raise ContractError("non-adjacent growth is defined for three-qubit chains")
    k = traj.pairs.index((0, 2))
    alpha_ac = np.abs(traj.alphas[:, k])
    stray = []
    for r in traj.states:
        m = np.array(r.mat)
        for i, j in [(0, 1), (1, 2)]:
            red_mask = _pair_coherence_mask(3, i, j)
            m = np.where(red_mask, 0.0, m)
        np.fill_diagonal(m, 0.0)
        stray.append(float(np.max(np.abs(m))))
    return alpha_ac, np.array(stray)


def _pair_coherence_mask(n: int, i: int, j: int) -> np.ndarray:
    """Entries ``<..1_i 0_j..| rho |..0_i 1_j..>`` with all other bits equal."""
    d = 1 << n
    idx = np.arange(d)
    bi = (idx >> (n - 1 - i)) & 1
    bj = (idx >> (n - 1 - j)) & 1
    others = idx & ~((1 << (n - 1 - i)) | (1 << (n - 1 - j)))
    row_ok = (bi[:, None] != bj[:, None]) & (bi[None, :] != bj[None, :])
    swap = bi[:, None] != bi[None, :]
    same_rest = others[:, None] == others[None, :]
    return row_ok & swap & same_rest


def work_commutator_norm(h: DMChainHamiltonian, scale: EnergyScale = EnergyScale()) -> float:
    """Frobenius norm of ``[sum_i H_i, H_DM]``; zero means no work is done."""
    hl = total_local_hamiltonian(h.n, scale)
    return float(np.linalg.norm(hl @ h.mat - h.mat @ hl))


def second_law_gap(traj: Trajectory) -> np.ndarray:
    """Relative entropy of each local-product state against the initial one."""
    ref = local_product(traj.states[0])
    return np.array([relative_entropy(local_product(r), ref) for r in traj.states])
