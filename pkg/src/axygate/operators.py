"""Dense operators on two qubits times two truncated bosonic modes.

Qubit basis per ion is (|g>, |e>) with sigma_z|e> = +|e>, sigma^+ = |e><g|.
The two-qubit index is ``2*q1 + q2``; the full space is qubits (x) mode b (x) mode c.
"""

from __future__ import annotations

import numpy as np

SZ = np.diag([-1.0, 1.0]).astype(complex)
SP = np.array([[0, 0], [1, 0]], dtype=complex)   # |e><g|
SM = SP.conj().T
SX = SP + SM
SY = -1j * SP + 1j * SM
I2 = np.eye(2, dtype=complex)

G = np.array([1, 0], dtype=complex)
E = np.array([0, 1], dtype=complex)


def sigma_phi(phi: float) -> np.ndarray:
    """sigma^+ e^{i phi} + sigma^- e^{-i phi} = cos(phi) sx + sin(phi) sy."""
    return SP * np.exp(1j * phi) + SM * np.exp(-1j * phi)


def on_ion(op: np.ndarray, ion: int) -> np.ndarray:
    return np.kron(op, I2) if ion == 1 else np.kron(I2, op)


def pi_rotation(phi: float) -> np.ndarray:
    """Ideal pi pulse exp(-i pi/2 sigma^phi) = -i sigma^phi."""
    return -1j * sigma_phi(phi)


def destroy(n: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, n)), 1).astype(complex)


def spin_signs() -> tuple[np.ndarray, np.ndarray]:
    """sigma_z eigenvalues of ion 1 and ion 2 over the two-qubit index."""
    s = np.array([-1.0, 1.0])
    return np.repeat(s, 2), np.tile(s, 2)


ZZ = np.kron(SZ, SZ)


def thermal_state(nBar: float, levels: int, tail_tol: float = 1e-8) -> np.ndarray:
    """Truncated thermal state of one mode with mean occupation ``nBar``.

    Raises ``ValueError`` when the population dropped by the truncation exceeds
    ``tail_tol``.
    """
    if levels < 2:
        raise ValueError("need at least two levels")
    if nBar < 0:
        raise ValueError("nBar must be non-negative")
    if nBar == 0:
        p = np.zeros(levels)
        p[0] = 1.0
        return np.diag(p).astype(complex)
    x = nBar / (1.0 + nBar)
    p = (1.0 - x) * x ** np.arange(levels)
    tail = x**levels
    if tail > tail_tol:
        raise ValueError(f"truncation at {levels} levels drops {tail:.2e} of the thermal population")
    return np.diag(p / p.sum()).astype(complex)


def operator_fidelity(A: np.ndarray, B: np.ndarray) -> float:
    """|Tr(A B^dag)| / sqrt(Tr(A A^dag) Tr(B B^dag))."""
    A = np.asarray(A)
    B = np.asarray(B)
    if A.shape != B.shape:
        raise ValueError("operators must have equal shapes")
    na = np.vdot(A, A).real
    nb = np.vdot(B, B).real
    if na == 0 or nb == 0:
        raise ValueError("zero-norm operator")
    return float(abs(np.vdot(B, A)) / np.sqrt(na * nb))


def partial_trace_motion(rho: np.ndarray, nq: int = 4) -> np.ndarray:
    m = rho.shape[0] // nq
    return np.trace(rho.reshape(nq, m, nq, m), axis1=1, axis2=3)


def displaced_thermal_tail(alpha: float, nBar: float, levels: int, work: int | None = None) -> float:
    """Population above ``levels - 1`` of a thermal state displaced by ``alpha``."""
    from scipy.linalg import expm
    work = work or max(4 * levels, levels + 60)
    rho = thermal_state(nBar, work, tail_tol=1.0)
    a = destroy(work)
    D = expm(alpha * (a.conj().T - a))
    p = np.real(np.diag(D @ rho @ D.conj().T))
    return float(max(p[levels:].sum(), 0.0))


def levels_for_tail(alpha: float, nBar: float, tol: float, minimum: int = 8) -> int:
    """Smallest truncation whose displaced-thermal tail is below ``tol``."""
    n = minimum
    while displaced_thermal_tail(alpha, nBar, n) > tol:
        n += 1
        if n > 200:
            raise ValueError("displacement too large for a dense truncation")
    return n
