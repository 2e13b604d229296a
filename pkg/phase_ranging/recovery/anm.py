"""Tone-gap completion by atomic-norm minimization, solved with ADMM.

The semidefinite program

    minimize    (1 / (2K)) * trace(Toep(u)) + t / 2
    subject to  [[Toep(u), x], [x^H, t]] >= 0,   x[observed] = h^2[observed]

is split into the structured block Theta(u, t, x) and a PSD copy Z. Each
iteration averages (u, t, x_missing) from Z, projects the over-relaxed block
onto the PSD cone and updates the multiplier. The missing tones of the last
iterate are replaced by the atoms of Toep(u) refined on the observed tones
whenever those atoms explain the observations.
"""

import logging
import math
from typing import Self

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from phase_ranging.constants import ComplexArray
from phase_ranging.exceptions import NoDataError
from phase_ranging.linalg import EigenSolver, eig_hermitian, project_psd, toeplitz_adjoint, toeplitz_hermitian
from phase_ranging.models import ArrayModel, GapMap, TwoWayResponse

from .abstract import AbstractRecovery

__all__ = (
    "AnmConfig",
    "AnmProblem",
    "AnmSolution",
    "recover_anm",
    "refine_atoms",
    "AnmRecovery",
)

logger = logging.getLogger(__name__)


class AnmConfig(BaseModel):
    """Settings of the ADMM atomic-norm solver."""

    model_config = ConfigDict(title="Recovery: Atomic Norm Settings")

    rho: float = Field(1.0, gt=0, description="Initial ADMM penalty, divided by the block size K + 1.")
    relaxation: float = Field(1.5, gt=0, lt=2, description="Over-relaxation factor; 1 disables it.")
    max_iter: int = Field(100, ge=1, description="Iteration cap.")
    eps_abs: float = Field(1e-6, gt=0, description="Absolute residual tolerance.")
    eps_rel: float = Field(1e-6, gt=0, description="Relative residual tolerance.")
    balance_ratio: float = Field(
        10.0,
        gt=1,
        description="The penalty is doubled (halved) when the primal (dual) residual exceeds the other by this ratio.",
    )
    eig_solver: EigenSolver = Field("jacobi", description="Eigensolver for the PSD projection.")
    refine_steps: int = Field(
        3,
        ge=0,
        description="Gauss-Newton steps refining the atoms of Toep(u) on the observed tones; 0 disables refinement.",
    )
    refine_threshold: float = Field(
        1e-3,
        gt=0,
        lt=1,
        description="Eigenvalues of Toep(u) above this fraction of the largest count as atoms.",
    )
    refine_tol: float = Field(
        1e-6,
        gt=0,
        description="Refined atoms replace the missing tones only if they fit the observations to this relative error.",
    )


class AnmProblem(ArrayModel):
    """Observed h^2 values on the index set `omega` of a K-tone grid."""

    observed: ComplexArray = Field(..., description="h^2 at the observed tones.")
    omega: np.ndarray = Field(..., description="Observed tone indices, ascending.")
    K: int = Field(..., ge=1, description="Total number of tones.")

    @property
    def missing(self) -> np.ndarray:
        mask = np.ones(self.K, dtype=bool)
        mask[self.omega] = False
        return np.flatnonzero(mask)

    @model_validator(mode="after")
    def validate_omega(self) -> Self:
        self.omega = np.asarray(self.omega, dtype=np.intp)
        if self.omega.ndim != 1 or self.omega.shape != self.observed.shape:
            raise ValueError("Observed values and indices must be vectors of the same length.")
        if self.omega.size == 0:
            raise ValueError("At least one tone must be observed.")
        if np.any(np.diff(self.omega) <= 0) or self.omega[0] < 0 or self.omega[-1] >= self.K:
            raise ValueError(f"Observed indices must be ascending, unique and inside 0..{self.K - 1}.")
        return self

    @classmethod
    def from_response(cls, resp: TwoWayResponse) -> Self:
        """Problem with the available tones of `resp` as observations.

        :raise NoDataError: If no tone is available.
        """
        omega = np.flatnonzero(resp.available)
        if omega.size == 0:
            raise NoDataError("No available tones to complete from.")
        return cls(observed=resp.h_sq[omega], omega=omega, K=resp.grid.K)


class AnmSolution(ArrayModel):
    """Completed h^2 together with the certificate (u, t) and solver statistics."""

    h_sq_full: ComplexArray
    u: ComplexArray = Field(..., description="First column of Toep(u).")
    t: float
    iterations: int
    primal_residual: float
    dual_residual: float
    converged: bool
    refined: bool = Field(False, description="Whether the missing tones come from the refined atoms.")
    min_eigenvalue: float = Field(..., description="Smallest eigenvalue of the block matrix after repair.")
    primal_history: list[float] = Field(default_factory=list)
    dual_history: list[float] = Field(default_factory=list)


def _block(u: np.ndarray, t: float, x: np.ndarray) -> np.ndarray:
    k = x.size
    theta = np.empty((k + 1, k + 1), dtype=np.complex128)
    theta[:k, :k] = toeplitz_hermitian(u)
    theta[:k, k] = x
    theta[k, :k] = x.conj()
    theta[k, k] = t
    return theta


def _fit_amplitudes(freqs: np.ndarray, tones: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    atoms = np.exp(1j * np.outer(tones, freqs))
    amplitudes = np.linalg.lstsq(atoms, y, rcond=None)[0]
    return atoms, amplitudes, y - atoms @ amplitudes


def refine_atoms(
    u: np.ndarray,
    observed: np.ndarray,
    omega: np.ndarray,
    cfg: AnmConfig,
) -> tuple[np.ndarray, np.ndarray] | None:
    """Atoms (frequencies, amplitudes) of Toep(u), refined to fit the observations.

    The frequencies come from the shift invariance of the dominant eigenvectors
    of Toep(u); `cfg.refine_steps` Gauss-Newton steps on the observed tones then
    refine frequencies and amplitudes together. Atom n of frequency f has entry
    exp(j f n) at tone n.

    :return: The atoms, or None if there are too few observations for them or they
        miss the observations by more than `cfg.refine_tol`.
    """
    w, v, _ = eig_hermitian(toeplitz_hermitian(u), solver="lapack")
    if w[0] <= 0:
        return None
    rank = int(np.count_nonzero(w > cfg.refine_threshold * w[0]))
    # r real frequencies and r complex amplitudes against 2|omega| real equations
    if rank >= u.size or 3 * rank > 2 * omega.size:
        return None

    basis = v[:, :rank]
    shift = np.linalg.lstsq(basis[:-1], basis[1:], rcond=None)[0]
    freqs = np.angle(np.linalg.eigvals(shift))

    tones = omega.astype(np.float64)
    atoms, amplitudes, residual = _fit_amplitudes(freqs, tones, observed)
    for _ in range(cfg.refine_steps):
        jac = np.hstack((1j * tones[:, None] * atoms * amplitudes, atoms, 1j * atoms))
        step = np.linalg.lstsq(
            np.vstack((jac.real, jac.imag)),
            np.concatenate((residual.real, residual.imag)),
            rcond=None,
        )[0]
        freqs = freqs + step[:rank]
        atoms, amplitudes, residual = _fit_amplitudes(freqs, tones, observed)

    if not np.linalg.norm(residual) <= cfg.refine_tol * np.linalg.norm(observed):
        return None
    return freqs, amplitudes


def recover_anm(problem: AnmProblem, cfg: AnmConfig | None = None) -> AnmSolution:
    """Complete h^2 on the missing tones by atomic-norm minimization.

    Observations are rescaled to unit RMS for the solve. At termination the
    missing tones and the certificate are rebuilt from the refined atoms of
    Toep(u) when those fit the observations (see `refine_atoms`). The block
    matrix is then made PSD by shifting u[0] and t by the most negative
    eigenvalue, which keeps the Toeplitz structure and the observed entries.

    :param problem: The observations.
    :param cfg: The solver settings.
    :return: The solution; `converged` is False when `max_iter` ran out.
    """
    cfg = cfg or AnmConfig()
    k = problem.K
    omega = problem.omega
    missing = problem.missing

    scale = float(np.sqrt(np.mean(np.abs(problem.observed) ** 2)))
    if scale == 0.0:
        scale = 1.0
    observed = problem.observed / scale

    if missing.size == 0:
        x = np.empty(k, dtype=np.complex128)
        x[omega] = problem.observed
        return AnmSolution(
            h_sq_full=x,
            u=np.zeros(k, dtype=np.complex128),
            t=0.0,
            iterations=0,
            primal_residual=0.0,
            dual_residual=0.0,
            converged=True,
            min_eigenvalue=0.0,
        )

    n = k + 1
    lags = 2.0 * (k - np.arange(k))
    rho = cfg.rho / n
    z = np.zeros((n, n), dtype=np.complex128)
    lam = np.zeros((n, n), dtype=np.complex128)
    x = np.zeros(k, dtype=np.complex128)
    x[omega] = observed
    u = np.zeros(k, dtype=np.complex128)
    t = 0.0

    primal_history: list[float] = []
    dual_history: list[float] = []
    converged = False
    r_norm = s_norm = math.inf
    iteration = 0
    for iteration in range(1, cfg.max_iter + 1):
        w = z - lam / rho

        u = toeplitz_adjoint(w[:k, :k]) / lags
        u[0] = u[0].real - 1.0 / (2.0 * rho * k)
        t = float(w[k, k].real) - 1.0 / (2.0 * rho)
        x[missing] = 0.5 * (w[missing, k] + w[k, missing].conj())
        theta = _block(u, t, x)

        z_prev = z
        relaxed = cfg.relaxation * theta + (1.0 - cfg.relaxation) * z_prev
        z = project_psd(relaxed + lam / rho, solver=cfg.eig_solver)
        lam = lam + rho * (relaxed - z)

        r_norm = float(np.linalg.norm(theta - z))
        s_norm = float(rho * np.linalg.norm(z - z_prev))
        primal_history.append(r_norm)
        dual_history.append(s_norm)

        eps_pri = n * cfg.eps_abs + cfg.eps_rel * max(float(np.linalg.norm(theta)), float(np.linalg.norm(z)))
        eps_dual = n * cfg.eps_abs + cfg.eps_rel * float(np.linalg.norm(lam))
        if r_norm <= eps_pri and s_norm <= eps_dual:
            converged = True
            break

        if r_norm > cfg.balance_ratio * s_norm:
            rho *= 2.0
        elif s_norm > cfg.balance_ratio * r_norm:
            rho /= 2.0

    if not converged:
        logger.warning(
            "ADMM stopped after %d iterations (primal residual %.3g, dual residual %.3g)",
            iteration,
            r_norm,
            s_norm,
        )

    refined = False
    if cfg.refine_steps > 0:
        atoms = refine_atoms(u, observed, omega, cfg)
        if atoms is not None:
            freqs, amplitudes = atoms
            x[missing] = np.exp(1j * np.outer(missing, freqs)) @ amplitudes
            weights = np.abs(amplitudes)
            u = np.exp(1j * np.outer(np.arange(k), freqs)) @ weights
            t = float(weights.sum())
            refined = True
        else:
            logger.debug("Atom refinement rejected, keeping the ADMM iterate")

    theta = _block(u, t, x)
    min_eig = float(eig_hermitian(theta, solver=cfg.eig_solver).eigenvalues[-1])
    if min_eig < 0:
        u[0] -= min_eig
        t -= min_eig
        min_eig = float(eig_hermitian(_block(u, t, x), solver=cfg.eig_solver).eigenvalues[-1])

    return AnmSolution(
        h_sq_full=x * scale,
        u=u * scale,
        t=t * scale,
        iterations=iteration,
        primal_residual=r_norm,
        dual_residual=s_norm,
        converged=converged,
        refined=refined,
        min_eigenvalue=min_eig * scale,
        primal_history=primal_history,
        dual_history=dual_history,
    )


class AnmRecovery(AbstractRecovery[AnmConfig]):
    """Complete every unavailable tone at once by atomic-norm minimization."""

    name = "anm"
    config = AnmConfig

    def recover(self, resp: TwoWayResponse, gaps: GapMap) -> TwoWayResponse:
        if resp.available.all():
            return resp
        solution = recover_anm(AnmProblem.from_response(resp), self.recovery_config)
        return TwoWayResponse(h_sq=solution.h_sq_full, available=np.ones_like(resp.available), grid=resp.grid)
