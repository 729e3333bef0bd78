"""Input checks shared by the estimators and the command-line runner."""

from __future__ import annotations

import numpy as np

from .exceptions import ContractError
from .thermostate import DensityMatrix


def check_density(x, num_qubits: int | None = None) -> DensityMatrix:
    """Coerce an array or :class:`DensityMatrix` to a validated state."""
    rho = x if isinstance(x, DensityMatrix) else DensityMatrix.from_matrix(x)
    if num_qubits is not None and rho.num_qubits != num_qubits:
        raise ContractError(f"expected a {num_qubits}-qubit state, got {rho.num_qubits}")
    return rho


def check_diagonal(rho: DensityMatrix, tol: float = 1e-12) -> DensityMatrix:
    off = np.array(rho.mat) - np.diag(np.diag(rho.mat))
    if np.max(np.abs(off)) > tol:
        raise ContractError("target state must be diagonal (uncorrelated)")
    return rho


def check_tau_grid(taus) -> np.ndarray:
    """1-D, strictly ascending, finite, at least two points."""
    taus = np.asarray(taus, dtype=float)
    if taus.ndim != 1 or taus.size < 2:
        raise ContractError("tau grid needs at least two points")
    if not np.all(np.isfinite(taus)):
        raise ContractError("tau grid must be finite")
    if np.any(np.diff(taus) <= 0):
        raise ContractError("tau grid must be strictly ascending")
    return taus
