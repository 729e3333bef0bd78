"""
Gate-level circuits, two simulation backends and the DM-chain constructions.

Qubit ``0`` is the most significant bit of a basis index, matching
:mod:`spinchain.densemat`. A circuit's ``readout_remap`` sends physical
qubit ``k`` to logical slot ``remap[k]`` after the last gate; both backends
apply it as a final wire permutation, so a trailing SWAP can be dropped by
folding it into the remap.

CNOT accounting counts each explicit SWAP as three CNOTs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .densemat import (
    MAX_DIM,
    dagger,
    embed,
    expm_herm,
    pauli_string,
)
from .exceptions import CalibrationError, ContractError, LayoutError
from .thermostate import DensityMatrix

ROTATIONS = ("RX", "RY", "RZ")
ONE_QUBIT = ("H", "S", "Sdg", "X") + ROTATIONS
TWO_QUBIT = ("CNOT", "SWAP")
KINDS = ONE_QUBIT + TWO_QUBIT

_INV_S2 = 1.0 / math.sqrt(2.0)
_FIXED = {
    "H": np.array([[_INV_S2, _INV_S2], [_INV_S2, -_INV_S2]], dtype=complex),
    "S": np.array([[1, 0], [0, 1j]], dtype=complex),
    "Sdg": np.array([[1, 0], [0, -1j]], dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "CNOT": np.array(
        [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex
    ),
    "SWAP": np.array(
        [[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=complex
    ),
}
_INVERSE_KIND = {"S": "Sdg", "Sdg": "S"}


def _rotation(kind: str, theta: float) -> np.ndarray:
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    if kind == "RX":
        return np.array([[c, -1j * s], [-1j * s, c]], dtype=complex)
    if kind == "RY":
        return np.array([[c, -s], [s, c]], dtype=complex)
    return np.array([[complex(c, -s), 0], [0, complex(c, s)]], dtype=complex)


@dataclass(frozen=True)
class Gate:
    """One gate. For CNOT the operands are ``(control, target)``."""

    kind: str
    qubits: tuple
    angle: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ContractError(f"unknown gate kind {self.kind!r}")
        qubits = tuple(int(q) for q in self.qubits)
        arity = 2 if self.kind in TWO_QUBIT else 1
        if len(qubits) != arity:
            raise ContractError(f"{self.kind} takes {arity} operand(s), got {qubits}")
        if len(set(qubits)) != arity:
            raise ContractError(f"{self.kind} operands must be distinct, got {qubits}")
        if self.kind in ROTATIONS:
            if self.angle is None or not math.isfinite(self.angle):
                raise ContractError(f"{self.kind} needs a finite angle")
            object.__setattr__(self, "angle", float(self.angle))
        elif self.angle is not None:
            raise ContractError(f"{self.kind} takes no angle")
        object.__setattr__(self, "qubits", qubits)

    def matrix(self) -> np.ndarray:
        if self.kind in ROTATIONS:
            return _rotation(self.kind, self.angle)
        return _FIXED[self.kind]

    def inverse(self) -> "Gate":
        if self.kind in ROTATIONS:
            return Gate(self.kind, self.qubits, -self.angle)
        return Gate(_INVERSE_KIND.get(self.kind, self.kind), self.qubits)

    def remapped(self, mapping: Sequence[int]) -> "Gate":
        return Gate(self.kind, tuple(mapping[q] for q in self.qubits), self.angle)


@dataclass(frozen=True)
class Circuit:
    """An ordered gate list on a fixed register with a readout permutation."""

    num_qubits: int
    gates: tuple = ()
    readout_remap: tuple | None = None

    def __post_init__(self):
        n = int(self.num_qubits)
        if n < 1:
            raise ContractError("a circuit needs at least one qubit")
        gates = tuple(self.gates)
        for g in gates:
            if not isinstance(g, Gate):
                raise ContractError(f"not a Gate: {g!r}")
            if max(g.qubits) >= n:
                raise ContractError(f"gate {g} addresses a qubit outside 0..{n - 1}")
        remap = tuple(range(n)) if self.readout_remap is None else tuple(
            int(p) for p in self.readout_remap
        )
        if sorted(remap) != list(range(n)):
            raise ContractError(f"readout_remap {remap} is not a permutation of 0..{n - 1}")
        object.__setattr__(self, "num_qubits", n)
        object.__setattr__(self, "gates", gates)
        object.__setattr__(self, "readout_remap", remap)

    def __add__(self, other: "Circuit") -> "Circuit":
        """Concatenate; only allowed when ``self`` has the identity remap."""
        if other.num_qubits != self.num_qubits:
            raise ContractError("cannot concatenate circuits on different registers")
        if self.readout_remap != tuple(range(self.num_qubits)):
            raise ContractError("cannot append gates after a non-trivial readout remap")
        return Circuit(self.num_qubits, self.gates + other.gates, other.readout_remap)

    def __len__(self) -> int:
        return len(self.gates)

    def inverse(self) -> "Circuit":
        if self.readout_remap != tuple(range(self.num_qubits)):
            raise ContractError("inverse of a remapped circuit is not supported")
        return Circuit(self.num_qubits, tuple(g.inverse() for g in reversed(self.gates)))

    def on(self, qubits: Sequence[int], num_qubits: int) -> "Circuit":
        """Relabel this circuit's qubits into a larger register."""
        if len(qubits) != self.num_qubits:
            raise ContractError("qubit map length must equal the circuit width")
        if self.readout_remap != tuple(range(self.num_qubits)):
            raise ContractError("cannot relabel a remapped circuit")
        return Circuit(num_qubits, tuple(g.remapped(qubits) for g in self.gates))

    def with_remap(self, remap: Sequence[int]) -> "Circuit":
        return Circuit(self.num_qubits, self.gates, tuple(remap))

    def to_text(self) -> str:
        return dump_circuit(self)


def remap_permutation(remap: Sequence[int]) -> np.ndarray:
    """Permutation matrix moving physical qubit ``k`` to slot ``remap[k]``."""
    n = len(remap)
    d = 1 << n
    perm = np.zeros((d, d), dtype=complex)
    for i in range(d):
        j = 0
        for k in range(n):
            if (i >> (n - 1 - k)) & 1:
                j |= 1 << (n - 1 - remap[k])
        perm[j, i] = 1.0
    return perm


def unitary_of(circ: Circuit) -> np.ndarray:
    """Full unitary of ``circ`` including the final readout permutation."""
    n = circ.num_qubits
    if 1 << n > MAX_DIM:
        raise ContractError(f"unitary_of supports up to 6 qubits, got {n}")
    u = np.eye(1 << n, dtype=complex)
    for g in circ.gates:
        u = embed(g.matrix(), g.qubits, n) @ u
    if circ.readout_remap != tuple(range(n)):
        u = remap_permutation(circ.readout_remap) @ u
    return u


def _apply_gate_tensor(t: np.ndarray, g: Gate, offset: int = 0) -> np.ndarray:
    """Apply ``g`` to the axes ``offset + q`` of a tensor with one axis per qubit."""
    axes = [offset + q for q in g.qubits]
    if g.kind == "SWAP":
        return np.swapaxes(t, axes[0], axes[1])
    k = len(axes)
    m = g.matrix().reshape([2] * (2 * k))
    out = np.tensordot(m, t, axes=(list(range(k, 2 * k)), axes))
    return np.moveaxis(out, list(range(k)), axes)


def _remap_axes(t: np.ndarray, remap: Sequence[int], offset: int = 0) -> np.ndarray:
    n = len(remap)
    if tuple(remap) == tuple(range(n)):
        return t
    src = [offset + k for k in range(n)]
    dst = [offset + remap[k] for k in range(n)]
    return np.moveaxis(t, src, dst)


def _run_tensor(gates, remap, psi: np.ndarray, n: int) -> np.ndarray:
    t = psi.reshape([2] * n)
    for g in gates:
        t = _apply_gate_tensor(t, g)
    t = _remap_axes(t, remap)
    return np.ascontiguousarray(t).reshape(1 << n)


def apply_statevector(circ: Circuit, psi) -> np.ndarray:
    """Gate-by-gate statevector simulation, remap applied at the end."""
    n = circ.num_qubits
    psi = np.asarray(psi, dtype=complex)
    if psi.shape != (1 << n,):
        raise ContractError(f"state of shape {psi.shape} does not fit {n} qubits")
    if n > 6:
        raise ContractError(f"statevector backend supports up to 6 qubits, got {n}")
    return _run_tensor(circ.gates, circ.readout_remap, psi, n)


def apply_density(circ: Circuit, rho: DensityMatrix) -> DensityMatrix:
    """Mixed-state simulation ``U rho U^dagger`` applied gate by gate."""
    n = circ.num_qubits
    if rho.num_qubits != n:
        raise ContractError(f"state has {rho.num_qubits} qubits, circuit has {n}")
    t = np.array(rho.mat).reshape([2] * (2 * n))
    for g in circ.gates:
        t = _apply_gate_tensor(t, g)
        # column indices carry the conjugate gate
        t = np.conj(_apply_gate_tensor(np.conj(t), g, offset=n))
    t = _remap_axes(t, circ.readout_remap)
    t = _remap_axes(t, circ.readout_remap, offset=n)
    d = 1 << n
    return DensityMatrix(n, np.ascontiguousarray(t).reshape(d, d))


def apply_density_purified(circ: Circuit, rho: DensityMatrix) -> DensityMatrix:
    """Density evolution through a purification and statevector simulation.

    ``rho`` is purified onto ``n`` ancillas appended after the system, the
    circuit acts on the system wires, and the ancillas are traced out.
    """
    n = circ.num_qubits
    if rho.num_qubits != n:
        raise ContractError(f"state has {rho.num_qubits} qubits, circuit has {n}")
    if n > 4:
        raise ContractError("purified backend supports up to 4 system qubits")
    w, v = np.linalg.eigh(np.array(rho.mat))
    w = np.clip(w, 0.0, None)
    d = 1 << n
    # |psi> = sum_k sqrt(w_k) |v_k>_sys |k>_anc
    psi = (v * np.sqrt(w)[None, :]).reshape(d * d)
    remap = tuple(circ.readout_remap) + tuple(range(n, 2 * n))
    out = _run_tensor(circ.gates, remap, psi, 2 * n).reshape(d, d)
    return DensityMatrix(n, out @ dagger(out))


def measure_populations(circ: Circuit, state) -> np.ndarray:
    """Exact outcome probabilities indexed by classical bit string.

    ``state`` is a statevector or a :class:`DensityMatrix`; the remap decides
    which classical slot each physical qubit is read into.
    """
    if isinstance(state, DensityMatrix):
        return np.diag(apply_density(circ, state).mat).real.copy()
    out = apply_statevector(circ, state)
    return np.abs(out) ** 2


def cnot_count(circ: Circuit) -> int:
    """CNOT gates plus three per explicit SWAP."""
    return sum(1 if g.kind == "CNOT" else 3 if g.kind == "SWAP" else 0 for g in circ.gates)


@dataclass(frozen=True)
class CouplingMap:
    """Undirected qubit pairs on which two-qubit gates are allowed."""

    edges: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        edges = frozenset(frozenset((int(a), int(b))) for a, b in self.edges)
        if any(len(e) != 2 for e in edges):
            raise ContractError("coupling map edges must join two distinct qubits")
        object.__setattr__(self, "edges", edges)

    @classmethod
    def linear(cls, n: int) -> "CouplingMap":
        return cls(frozenset((i, i + 1) for i in range(n - 1)))

    @classmethod
    def prep_layout(cls) -> "CouplingMap":
        """Six-qubit layout: a linear system chain with one ancilla per site."""
        return cls(frozenset({(0, 1), (1, 2), (0, 3), (1, 4), (2, 5)}))

    def allows(self, a: int, b: int) -> bool:
        return frozenset((a, b)) in self.edges


def check_layout(circ: Circuit, cmap: CouplingMap) -> list[tuple[int, Gate]]:
    """``(position, gate)`` for every two-qubit gate outside the coupling map."""
    return [
        (k, g)
        for k, g in enumerate(circ.gates)
        if g.kind in TWO_QUBIT and not cmap.allows(*g.qubits)
    ]


def require_layout(circ: Circuit, cmap: CouplingMap) -> Circuit:
    bad = check_layout(circ, cmap)
    if bad:
        raise LayoutError(f"{len(bad)} gate(s) violate the coupling map: {bad}")
    return circ


# ---------------------------------------------------------------- text format


def _fmt_angle(x: float) -> str:
    return repr(float(x))


def dump_circuit(circ: Circuit) -> str:
    """Line format: ``qubits N``, one ``KIND q[,q2][,angle]`` per gate, ``remap ...``."""
    lines = [f"qubits {circ.num_qubits}"]
    for g in circ.gates:
        fields = [str(q) for q in g.qubits]
        if g.angle is not None:
            fields.append(_fmt_angle(g.angle))
        lines.append(f"{g.kind} {','.join(fields)}")
    lines.append("remap " + " ".join(str(p) for p in circ.readout_remap))
    return "\n".join(lines) + "\n"


def load_circuit(text: str) -> Circuit:
    lines = [ln.strip() for ln in text.strip().splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("qubits "):
        raise ContractError("circuit text must start with 'qubits N'")
    n = int(lines[0].split()[1])
    remap = None
    gates = []
    for ln in lines[1:]:
        head, _, rest = ln.partition(" ")
        if head == "remap":
            remap = tuple(int(p) for p in rest.split())
            continue
        fields = rest.split(",")
        if head in ROTATIONS:
            gates.append(Gate(head, tuple(int(q) for q in fields[:-1]), float(fields[-1])))
        else:
            gates.append(Gate(head, tuple(int(q) for q in fields)))
    return Circuit(n, tuple(gates), remap)


# ------------------------------------------------------------- constructions


def u2_dm_circuit(tau: float, qubits: Sequence[int] = (0, 1), num_qubits: int = 2) -> Circuit:
    """Two-CNOT circuit for ``exp(-i tau (XY - YX))`` on a neighbouring pair.

    The Hadamard maps the generator to ``Z (x) Y - X (x) X``-type terms that
    a CNOT turns into independent Y rotations on each qubit.
    """
    a, b = qubits
    theta = 2.0 * tau
    gates = (
        Gate("H", (a,)),
        Gate("CNOT", (a, b)),
        Gate("RY", (a,), theta),
        Gate("RY", (b,), theta),
        Gate("CNOT", (a, b)),
        Gate("H", (a,)),
    )
    return Circuit(num_qubits, gates)


_BASIS_IN = {"X": [("H", None)], "Y": [("RX", math.pi / 2)], "Z": []}


def pauli_rotation_circuit(label: str, theta: float) -> Circuit:
    """``exp(-i theta/2 P)`` for a full-support Pauli string via a CNOT ladder."""
    n = len(label)
    pre = []
    for q, c in enumerate(label.upper()):
        if c not in _BASIS_IN:
            raise ContractError(f"Pauli string must use X, Y, Z only, got {label!r}")
        for kind, ang in _BASIS_IN[c]:
            pre.append(Gate(kind, (q,), ang))
    ladder = [Gate("CNOT", (q, q + 1)) for q in range(n - 1)]
    core = [Gate("RZ", (n - 1,), theta)]
    body = pre + ladder + core + [g.inverse() for g in reversed(ladder)]
    body += [g.inverse() for g in reversed(pre)]
    return Circuit(n, tuple(body))


@dataclass(frozen=True)
class CartanConstants:
    """``(alpha, beta, c)`` of ``U3(tau) = K^dag (I (x) U2(c tau)) K``."""

    alpha: float
    beta: float
    c: float
    residual: float = 0.0


def k_generator(alpha: float, beta: float) -> np.ndarray:
    """``(alpha XZY + beta YZX) / 2``."""
    return 0.5 * (alpha * pauli_string("XZY") + beta * pauli_string("YZX"))


def three_qubit_dm_generator(coupling: float = 1.0) -> np.ndarray:
    pair = pauli_string("XY") - pauli_string("YX")
    return coupling * (embed(pair, [0, 1], 3) + embed(pair, [1, 2], 3))


def _cartan_product(alpha, beta, c, tau):
    k = expm_herm(k_generator(alpha, beta), 1.0)
    pair = pauli_string("XY") - pauli_string("YX")
    mid = embed(expm_herm(pair, c * tau), [1, 2], 3)
    return dagger(k) @ mid @ k


CARTAN_SAMPLE = (0.2, 0.5, 1.1, 2.3, 0.9)


def cartan_residual(consts: CartanConstants, taus: Iterable[float] = CARTAN_SAMPLE) -> float:
    """Largest Frobenius error of the factorization over ``taus``."""
    h3 = three_qubit_dm_generator()
    return max(
        float(np.linalg.norm(
            _cartan_product(consts.alpha, consts.beta, consts.c, t) - expm_herm(h3, t)
        ))
        for t in taus
    )


def _wrap(x: float) -> float:
    return float((x + math.pi) % (2 * math.pi) - math.pi)


def cartan_constants(tol: float = 1e-9) -> CartanConstants:
    """Solve for the Cartan constants by deterministic multi-start least squares.

    Raises:
        CalibrationError: if the best residual exceeds ``1e-6``.
    """
    from scipy.optimize import least_squares

    h3 = three_qubit_dm_generator()
    targets = [expm_herm(h3, t) for t in CARTAN_SAMPLE]

    def residuals(v):
        out = []
        for t, u in zip(CARTAN_SAMPLE, targets):
            d = _cartan_product(v[0], v[1], v[2], t) - u
            out.append(d.real.ravel())
            out.append(d.imag.ravel())
        return np.concatenate(out)

    best = None
    for a0 in (-1.0, 1.0):
        for b0 in (-1.0, 1.0):
            sol = least_squares(
                residuals, [a0, b0, 1.0], xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=2000
            )
            if best is None or sol.cost < best.cost - 1e-20:
                best = sol
            if best.cost < 1e-24:
                break
        if best.cost < 1e-24:
            break
    alpha, beta, c = best.x
    consts = CartanConstants(_wrap(alpha), _wrap(beta), float(c))
    res = cartan_residual(consts)
    consts = CartanConstants(consts.alpha, consts.beta, consts.c, res)
    if res > 1e-6:
        raise CalibrationError(f"Cartan solve residual {res:.3e} above 1e-6", report=consts)
    return consts


def k_circuit_product(consts: CartanConstants) -> Circuit:
    """``exp(-i alpha/2 XZY) exp(-i beta/2 YZX)`` as two 4-CNOT ladders."""
    return pauli_rotation_circuit("YZX", consts.beta) + pauli_rotation_circuit("XZY", consts.alpha)


def k_core_circuit(alpha: float, beta: float) -> Circuit:
    """Four-CNOT circuit for ``exp(-i/2 (alpha XYZ + beta YXZ))`` on a line.

    Conjugating by ``H_1 CNOT(2,1) CNOT(1,0)`` sends ``XYZ`` to ``Y_1`` and
    ``YXZ`` to ``Y_0`` (up to sign), leaving two single-qubit rotations.
    """
    enc = [Gate("H", (1,)), Gate("CNOT", (2, 1)), Gate("CNOT", (1, 0))]
    core = [Gate("RY", (1,), -alpha), Gate("RY", (0,), beta)]
    dec = [g.inverse() for g in reversed(enc)]
    return Circuit(3, tuple(enc + core + dec))


def k_circuit_swapped(consts: CartanConstants) -> Circuit:
    """``(I (x) SWAP) exp(-i/2 (alpha XYZ + beta YXZ)) (I (x) SWAP)``; 10 CNOTs.

    Raises:
        LayoutError: never for the built circuit; checked against the linear map.
    """
    swap = Circuit(3, (Gate("SWAP", (1, 2)),))
    circ = swap + k_core_circuit(consts.alpha, consts.beta) + swap
    return require_layout(circ, CouplingMap.linear(3))


PRODUCT18 = "product18"
SWAPPED13 = "swapped13"


def u3_cartan_circuit(
    tau: float,
    consts: CartanConstants,
    variant: str = SWAPPED13,
    coupling: float = 1.0,
) -> Circuit:
    """Fixed-depth circuit for the three-qubit DM propagator at time ``tau``.

    ``product18`` wraps the middle two-qubit block in the 8-CNOT ``K`` and its
    inverse. ``swapped13`` uses the swapped ``K`` form: the inner SWAP pair
    collapses onto the middle block (reversing its sign) and the trailing
    SWAP becomes a readout remap, leaving one explicit SWAP.
    """
    t = consts.c * tau * coupling
    if variant == PRODUCT18:
        k = k_circuit_product(consts)
        mid = u2_dm_circuit(t).on((1, 2), 3)
        return k + mid + k.inverse()
    if variant == SWAPPED13:
        core = k_core_circuit(consts.alpha, consts.beta)
        mid = u2_dm_circuit(-t).on((1, 2), 3)
        swap = Circuit(3, (Gate("SWAP", (1, 2)),))
        circ = swap + core + mid + core.inverse()
        return require_layout(circ.with_remap((0, 2, 1)), CouplingMap.linear(3))
    raise ContractError(f"unknown variant {variant!r}; use {PRODUCT18!r} or {SWAPPED13!r}")


def u3_trotter_circuit(tau: float, steps: int, coupling: float = 1.0) -> Circuit:
    """First-order Trotter product of the two neighbouring DM blocks."""
    if steps < 1:
        raise ContractError(f"steps must be >= 1, got {steps}")
    dt = tau * coupling / steps
    step = u2_dm_circuit(dt).on((0, 1), 3) + u2_dm_circuit(dt).on((1, 2), 3)
    return Circuit(3, step.gates * steps)


NUM_PREP_ANGLES = 12
SYSTEM = (0, 1, 2)
ANCILLA = (3, 4, 5)


def variational_prep_circuit(angles: Sequence[float]) -> Circuit:
    """Six-qubit purification ansatz for a diagonal three-qubit state.

    Layout: ``RY(angles[q])`` on every qubit ``q``, ``CNOT(3+i -> i)`` for
    each system qubit ``i``, then ``RY(angles[6+q])`` on every qubit.
    """
    angles = [float(a) for a in angles]
    if len(angles) != NUM_PREP_ANGLES:
        raise ContractError(f"expected {NUM_PREP_ANGLES} angles, got {len(angles)}")
    gates = [Gate("RY", (q,), angles[q]) for q in range(6)]
    gates += [Gate("CNOT", (a, s)) for s, a in zip(SYSTEM, ANCILLA)]
    gates += [Gate("RY", (q,), angles[6 + q]) for q in range(6)]
    return Circuit(6, tuple(gates))


def prepared_system_state(angles: Sequence[float]) -> DensityMatrix:
    """System state left by the prep circuit on ``|000000>`` after discarding ancillas."""
    psi0 = np.zeros(64, dtype=complex)
    psi0[0] = 1.0
    psi = apply_statevector(variational_prep_circuit(angles), psi0)
    m = psi.reshape(8, 8)
    return DensityMatrix(3, m @ dagger(m))


AB_FIRST = "ab_first"
BC_FIRST = "bc_first"


def coupling_prep(tau_ab: float, tau_bc: float, order: str = AB_FIRST) -> Circuit:
    """Two neighbouring DM blocks that imprint correlations on a diagonal state.

    ``order`` selects whether the ``(0, 1)`` block or the ``(1, 2)`` block acts
    first.
    """
    ab = u2_dm_circuit(tau_ab).on((0, 1), 3)
    bc = u2_dm_circuit(tau_bc).on((1, 2), 3)
    if order == AB_FIRST:
        return ab + bc
    if order == BC_FIRST:
        return bc + ab
    raise ContractError(f"unknown order {order!r}; use {AB_FIRST!r} or {BC_FIRST!r}")
