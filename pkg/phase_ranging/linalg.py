"""Complex linear-algebra kernel shared by the estimators.

The eigensolver is a cyclic Jacobi method for Hermitian matrices. Pairs of
indices are visited in round-robin order so that every round rotates a set of
disjoint (p, q) planes at once with vectorized numpy updates.
"""

from functools import lru_cache
from typing import Literal, NamedTuple

import numpy as np
import scipy.linalg

from phase_ranging.exceptions import ConvergenceError, DimensionError, NotHermitianError

__all__ = (
    "EigenSolver",
    "EigenDecomposition",
    "hankel",
    "toeplitz_hermitian",
    "toeplitz_adjoint",
    "eig_hermitian",
    "project_psd",
)

EigenSolver = Literal["jacobi", "lapack"]

HERMITIAN_TOL = 1e-12
MAX_SWEEPS = 100
OFF_DIAGONAL_TOL = 1e-12


class EigenDecomposition(NamedTuple):
    """Eigenpairs of a Hermitian matrix, eigenvalues sorted in descending order."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    sweeps: int = 0


def hankel(h: np.ndarray, L: int) -> np.ndarray:  # noqa: N803
    """Build the (K - L + 1) x L Hankel matrix with entry (r, c) = h[r + c].

    :param h: The length-K vector.
    :param L: The window (smoothing) length.
    :raise DimensionError: If L is outside 1..K.
    :return: The Hankel matrix.
    """
    h = np.asarray(h, dtype=np.complex128)
    if h.ndim != 1:
        raise DimensionError(f"Expected a vector, got shape {h.shape}.")
    if not 1 <= L <= h.size:
        raise DimensionError(f"Smoothing factor L={L} must lie in 1..{h.size}.")
    return np.lib.stride_tricks.sliding_window_view(h, L).copy()


def toeplitz_hermitian(u: np.ndarray) -> np.ndarray:
    """Hermitian Toeplitz matrix whose first column is `u`."""
    u = np.asarray(u, dtype=np.complex128)
    u = u.copy()
    u[0] = u[0].real
    return scipy.linalg.toeplitz(u, u.conj())


def toeplitz_adjoint(a: np.ndarray) -> np.ndarray:
    """Sum of each lower diagonal plus the conjugate of the matching upper diagonal.

    Entry d is the inner product of `a` with the Hermitian Toeplitz basis matrix for lag d,
    so `toeplitz_adjoint(toeplitz_hermitian(u))[d]` equals `2 * (n - d) * u[d]` for d > 0.
    """
    a = np.asarray(a, dtype=np.complex128)
    n = a.shape[0]
    return np.array([np.trace(a, offset=-d) + np.conj(np.trace(a, offset=d)) for d in range(n)])


@lru_cache(maxsize=128)
def _round_robin(n: int) -> tuple[tuple[np.ndarray, np.ndarray], ...]:
    """Disjoint (p, q) pairs per round such that one sweep covers every p < q once."""
    m = n + n % 2
    players = list(range(m))
    rounds = []
    for _ in range(m - 1):
        pairs = sorted(
            (min(a, b), max(a, b)) for a, b in zip(players[: m // 2], reversed(players[m // 2 :]), strict=True)
        )
        pairs = [(p, q) for p, q in pairs if q < n]
        p = np.fromiter((pair[0] for pair in pairs), dtype=np.intp, count=len(pairs))
        q = np.fromiter((pair[1] for pair in pairs), dtype=np.intp, count=len(pairs))
        rounds.append((p, q))
        players = [players[0], players[-1], *players[1:-1]]
    return tuple(rounds)


def _off_diagonal_norm(a: np.ndarray) -> float:
    return float(np.linalg.norm(a - np.diag(np.diag(a))))


def _jacobi(a: np.ndarray, max_sweeps: int) -> tuple[np.ndarray, np.ndarray, int]:
    n = a.shape[0]
    a = a.copy()
    v = np.eye(n, dtype=np.complex128)
    threshold = OFF_DIAGONAL_TOL * float(np.linalg.norm(a))
    rounds = _round_robin(n)

    for sweep in range(max_sweeps + 1):
        if _off_diagonal_norm(a) <= threshold:
            return np.diag(a).real.copy(), v, sweep
        if sweep == max_sweeps:
            break
        for p, q in rounds:
            if p.size == 0:
                continue
            apq = a[p, q]
            # D = diag(1, e^{-i phi}) makes a[p, q] real, then a real rotation zeroes it.
            phase = np.exp(-1j * np.angle(apq))
            theta = 0.5 * np.arctan2(2.0 * np.abs(apq), a[q, q].real - a[p, p].real)
            theta = np.where(theta > np.pi / 4, theta - np.pi / 2, theta)
            c = np.cos(theta)
            s = np.sin(theta)

            col_p, col_q = a[:, p].copy(), a[:, q].copy()
            a[:, p] = col_p * c - col_q * (s * phase)
            a[:, q] = col_p * s + col_q * (c * phase)

            row_p, row_q = a[p, :].copy(), a[q, :].copy()
            a[p, :] = c[:, None] * row_p - (s * phase.conj())[:, None] * row_q
            a[q, :] = s[:, None] * row_p + (c * phase.conj())[:, None] * row_q

            vec_p, vec_q = v[:, p].copy(), v[:, q].copy()
            v[:, p] = vec_p * c - vec_q * (s * phase)
            v[:, q] = vec_p * s + vec_q * (c * phase)

    raise ConvergenceError(f"Jacobi eigensolver did not converge within {max_sweeps} sweeps (n={n}).")


def eig_hermitian(
    a: np.ndarray,
    solver: EigenSolver = "jacobi",
    max_sweeps: int = MAX_SWEEPS,
) -> EigenDecomposition:
    """Eigendecomposition of a Hermitian matrix.

    :param a: The square Hermitian matrix.
    :param solver: `jacobi` for the cyclic Jacobi method, `lapack` for `numpy.linalg.eigh`.
    :param max_sweeps: The Jacobi sweep cap.
    :raise DimensionError: If the matrix is not square.
    :raise NotHermitianError: If the matrix is not Hermitian within tolerance.
    :raise ConvergenceError: If Jacobi does not converge within `max_sweeps`.
    :return: Eigenvalues sorted descending (stable among ties) and unitary eigenvectors.
    """
    a = np.asarray(a, dtype=np.complex128)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f"Expected a square matrix, got shape {a.shape}.")
    if a.size == 0:
        raise DimensionError("Cannot decompose an empty matrix.")

    scale = max(1.0, float(np.max(np.abs(a))))
    if np.max(np.abs(a - a.conj().T)) > HERMITIAN_TOL * scale:
        raise NotHermitianError("Matrix is not Hermitian.")
    a = 0.5 * (a + a.conj().T)

    if solver == "jacobi":
        w, v, sweeps = _jacobi(a, max_sweeps)
    elif solver == "lapack":
        w, v = np.linalg.eigh(a)
        sweeps = 0
    else:
        raise ValueError(f"Unknown eigen solver {solver!r}.")

    order = np.argsort(-w, kind="stable")
    return EigenDecomposition(eigenvalues=w[order], eigenvectors=v[:, order], sweeps=sweeps)


def project_psd(a: np.ndarray, solver: EigenSolver = "jacobi") -> np.ndarray:
    """Frobenius-nearest positive semidefinite matrix (negative eigenvalues clipped to zero)."""
    w, v, _ = eig_hermitian(a, solver=solver)
    projected = (v * np.clip(w, 0.0, None)) @ v.conj().T
    return 0.5 * (projected + projected.conj().T)
