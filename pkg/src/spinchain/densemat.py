"""
Dense complex linear algebra for qubit registers of up to six qubits.

Matrices are plain ``numpy`` complex arrays. Qubit ``0`` is the leftmost
Kronecker factor, i.e. the most significant bit of a basis index, so the
basis of two qubits is ordered ``|00>, |01>, |10>, |11>`` with the label read
as ``q0 q1``.
"""

from __future__ import annotations

from functools import reduce
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .exceptions import CapacityError, ContractError, DomainError

MAX_DIM = 64
HERMITIAN_TOL = 1e-10

I2 = np.eye(2, dtype=complex)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULI = {"I": I2, "X": SIGMA_X, "Y": SIGMA_Y, "Z": SIGMA_Z}


class EigDecomposition(NamedTuple):
    """Ascending eigenvalues and the unitary whose columns are eigenvectors."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def as_cmatrix(m) -> np.ndarray:
    """Coerce ``m`` to a square complex array, checking the size limit."""
    a = np.asarray(m, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ContractError(f"expected a square matrix, got shape {a.shape}")
    if a.shape[0] > MAX_DIM:
        raise CapacityError(f"dimension {a.shape[0]} exceeds {MAX_DIM}")
    return a


def dagger(m: np.ndarray) -> np.ndarray:
    return np.conj(np.transpose(m))


def num_qubits_of(m: np.ndarray) -> int:
    """Number of qubits for a ``2**n`` square matrix."""
    dim = m.shape[0]
    n = dim.bit_length() - 1
    if dim < 1 or 1 << n != dim:
        raise ContractError(f"dimension {dim} is not a power of two")
    return n


def kron(a, b) -> np.ndarray:
    """Kronecker product ``a (x) b`` with the capacity check applied.

    Entry ``(i*db + k, j*db + l)`` of the result is ``a[i, j] * b[k, l]``.
    """
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if a.shape[0] * b.shape[0] > MAX_DIM:
        raise CapacityError(
            f"kron of {a.shape[0]}x{a.shape[0]} and {b.shape[0]}x{b.shape[0]} exceeds {MAX_DIM}"
        )
    return np.kron(a, b)


def kron_all(*factors) -> np.ndarray:
    return reduce(kron, factors)


def pauli_string(label: str) -> np.ndarray:
    """Matrix of a Pauli string such as ``"XZY"`` (first letter on qubit 0)."""
    try:
        return kron_all(*(PAULI[c] for c in label.upper()))
    except KeyError as exc:
        raise ContractError(f"unknown Pauli letter in {label!r}") from exc


def embed(op, qubits: Sequence[int], num_qubits: int) -> np.ndarray:
    """Lift an operator on ``qubits`` (in the given order) to the full register.

    ``qubits`` need not be contiguous or sorted; the operator's first tensor
    factor acts on ``qubits[0]``.
    """
    op = np.asarray(op, dtype=complex)
    k = len(qubits)
    if op.shape != (1 << k, 1 << k):
        raise ContractError(f"operator shape {op.shape} does not match {k} qubits")
    if len(set(qubits)) != k or any(q < 0 or q >= num_qubits for q in qubits):
        raise ContractError(f"invalid qubit operands {tuple(qubits)} for {num_qubits} qubits")
    if num_qubits > 6:
        raise CapacityError(f"{num_qubits} qubits exceed the 64-dimensional limit")
    rest = [q for q in range(num_qubits) if q not in qubits]
    full = np.kron(op, np.eye(1 << len(rest), dtype=complex))
    # axes of ``full`` are ordered (qubits..., rest...); move them to 0..n-1
    order = list(qubits) + rest
    perm = np.argsort(order)
    n = num_qubits
    t = full.reshape([2] * (2 * n))
    t = t.transpose(list(perm) + [n + p for p in perm])
    return t.reshape(1 << n, 1 << n)


def partial_trace(m, num_qubits: int, keep: Sequence[int]) -> np.ndarray:
    """Trace out every qubit not listed in ``keep``.

    Args:
        m: matrix of dimension ``2**num_qubits``.
        num_qubits: register size.
        keep: strictly increasing, non-empty qubit indices to retain.

    Returns:
        The reduced ``2**len(keep)`` matrix, in the order given by ``keep``.

    Raises:
        ContractError: if the dimension does not match or ``keep`` is not
            strictly increasing.
        IndexError: if an index in ``keep`` is out of range.
    """
    m = np.asarray(m, dtype=complex)
    keep = list(keep)
    if m.shape != (1 << num_qubits, 1 << num_qubits):
        raise ContractError(f"matrix shape {m.shape} is not 2**{num_qubits} square")
    if not keep or any(b <= a for a, b in zip(keep, keep[1:])):
        raise ContractError(f"keep must be non-empty and strictly increasing, got {keep}")
    if keep[-1] >= num_qubits or keep[0] < 0:
        raise IndexError(f"qubit index out of range in {keep} for {num_qubits} qubits")
    if len(keep) == num_qubits:
        return m.copy()
    n = num_qubits
    t = m.reshape([2] * (2 * n))
    traced = [q for q in range(n) if q not in keep]
    # trace highest axes first so remaining indices stay valid
    for q in sorted(traced, reverse=True):
        cur = t.ndim // 2
        t = np.trace(t, axis1=q, axis2=q + cur)
    d = 1 << len(keep)
    return t.reshape(d, d)


def is_hermitian(m, tol: float = HERMITIAN_TOL) -> bool:
    m = np.asarray(m)
    return bool(np.max(np.abs(m - dagger(m)), initial=0.0) <= tol)


def herm_eig(m) -> EigDecomposition:
    """Eigendecomposition of a Hermitian matrix.

    The input is symmetrized before the call to LAPACK so that accumulated
    rounding does not leak into the spectrum.

    Raises:
        ContractError: if ``m`` is not Hermitian within ``1e-10`` entrywise.
    """
    m = as_cmatrix(m)
    if not is_hermitian(m):
        raise ContractError("matrix is not Hermitian within 1e-10")
    w, v = np.linalg.eigh(0.5 * (m + dagger(m)))
    return EigDecomposition(w, v)


def func_herm(m, f: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """Apply a scalar function to a Hermitian matrix through its spectrum.

    ``f`` receives the real eigenvalue array and must return an array of the
    same length; non-finite outputs are rejected.

    Raises:
        DomainError: if ``f`` is undefined (NaN or infinite) at an eigenvalue.
    """
    w, v = herm_eig(m)
    with np.errstate(divide="ignore", invalid="ignore"):
        fw = np.asarray(f(w), dtype=complex)
    if fw.shape != w.shape:
        fw = np.broadcast_to(fw, w.shape).astype(complex)
    if not np.all(np.isfinite(fw)):
        bad = w[~np.isfinite(fw)]
        raise DomainError(f"function undefined at eigenvalue(s) {bad}")
    return (v * fw) @ dagger(v)


def expm_herm(m, t: float) -> np.ndarray:
    """``exp(-1j * t * m)`` for Hermitian ``m``."""
    return func_herm(m, lambda w: np.exp(-1j * t * w))


def phase_aligned_distance(a, b) -> float:
    """Frobenius distance between ``a`` and ``b`` after removing a global phase.

    The phase is fixed on the largest-magnitude entry of ``b``.
    """
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    k = np.unravel_index(np.argmax(np.abs(b)), b.shape)
    if abs(a[k]) == 0.0:
        return float(np.linalg.norm(a - b))
    phase = a[k] / abs(a[k]) * abs(b[k]) / b[k]
    return float(np.linalg.norm(a - phase * b))
