"""Single-snapshot MUSIC delay estimation over one or several tone bands."""

import logging
import math
from functools import lru_cache
from typing import Literal, Self

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.signal import find_peaks

from phase_ranging.constants import ComplexArray, RealArray
from phase_ranging.exceptions import DimensionError, EstimationError, NoDataError
from phase_ranging.linalg import EigenSolver, eig_hermitian, hankel
from phase_ranging.models import (
    ArrayModel,
    EstimateDiagnostics,
    IQCapture,
    RangeEstimate,
    ToneBand,
    ToneGrid,
    TwoWayResponse,
)
from phase_ranging.reconstruct import find_bands, reconstruct_band, two_way

__all__ = (
    "EstimatorMode",
    "CombineMethod",
    "MusicConfig",
    "SubspaceDecomposition",
    "PseudoSpectrum",
    "smoothing_factor",
    "decompose",
    "steering",
    "tau_grid",
    "pseudospectrum",
    "combined_pseudospectrum",
    "first_peak",
    "estimate_response",
    "estimate_range",
)

logger = logging.getLogger(__name__)

EstimatorMode = Literal["full", "zero_pad", "mps", "wps"]
CombineMethod = Literal["mps", "wps"]

CLAMP_FACTOR = 1e-12


class MusicConfig(BaseModel):
    """Settings of the MUSIC estimator."""

    model_config = ConfigDict(title="MUSIC Estimator Settings")

    tau_max: float = Field(200e-9, gt=0, description="Upper end of the delay search grid in seconds.")
    tau_step: float = Field(0.01e-9, gt=0, description="Step of the delay search grid in seconds.")
    threshold_ratio: float = Field(
        3e-5,
        gt=0,
        lt=1,
        description="Eigenvalues at or above this fraction of the largest one span the signal subspace.",
    )
    prominence_ratio: float = Field(
        0.5,
        gt=0,
        le=1,
        description="The first local maximum reaching this fraction of the global maximum is the LoS peak.",
    )
    forward_backward: bool = Field(
        True,
        description="Average the smoothed covariance with its conjugate flip before the eigendecomposition.",
    )
    min_band_len: int = Field(2, ge=2, description="Bands shorter than this are left out of MPS and WPS.")
    smoothing_factor: int | None = Field(
        None,
        ge=1,
        description="Fixed smoothing factor L instead of floor(len / 2) + 1; clipped to the band length.",
    )
    eig_solver: EigenSolver = Field("jacobi", description="Eigensolver for the smoothed covariance.")
    noise_form: bool = Field(False, description="Evaluate the pseudospectrum through the noise subspace.")


class SubspaceDecomposition(ArrayModel):
    """Signal and noise subspaces of one smoothed band, in steering-vector coordinates."""

    signal_basis: ComplexArray = Field(..., description="Orthonormal columns spanning the signal subspace.")
    noise_basis: ComplexArray = Field(..., description="Orthonormal columns spanning the noise subspace.")
    noise_dim: int = Field(..., ge=0)
    L: int = Field(..., ge=1, description="Smoothing factor.")
    eigenvalues: RealArray = Field(..., description="Eigenvalues in descending order.")

    @property
    def signal_dim(self) -> int:
        return int(self.signal_basis.shape[1])

    @model_validator(mode="after")
    def validate_dims(self) -> Self:
        if self.signal_dim + self.noise_dim != self.L:
            raise ValueError(f"Signal ({self.signal_dim}) and noise ({self.noise_dim}) dims must add up to L={self.L}.")
        return self


class PseudoSpectrum(ArrayModel):
    """MUSIC pseudospectrum J(tau) on a uniform delay grid."""

    tau_grid: RealArray
    values: RealArray
    clamped: bool = Field(False, description="Whether any denominator was clamped.")


def smoothing_factor(band_len: int) -> int:
    """Smoothing factor maximizing the number of resolvable paths, min(L, band_len - L + 1).

    :param band_len: Number of tones in the band.
    :raise DimensionError: If the band is empty.
    :return: floor(band_len / 2) + 1.
    """
    if band_len < 1:
        raise DimensionError(f"Band length must be positive, got {band_len}.")
    return band_len // 2 + 1


def decompose(
    h_band: np.ndarray,
    L: int,  # noqa: N803
    threshold_ratio: float = 3e-5,
    solver: EigenSolver = "jacobi",
    forward_backward: bool = True,
) -> SubspaceDecomposition:
    """Split the smoothed covariance H^H H of one band into signal and noise subspaces.

    The range of H^H H is spanned by conjugated steering vectors, so both
    bases are returned conjugated and can be projected on directly.

    :param h_band: One-way channel over a contiguous band.
    :param L: The smoothing factor.
    :param threshold_ratio: Eigenvalues >= threshold_ratio * max are signal.
    :param solver: The eigensolver.
    :param forward_backward: Average H^H H with its conjugate flip J conj(H^H H) J.
    :raise EstimationError: If the band is shorter than two tones or all zero.
    :raise DimensionError: If L exceeds the band length.
    :return: The decomposition.
    """
    h_band = np.asarray(h_band, dtype=np.complex128)
    if h_band.size < 2:
        raise EstimationError(f"A band of {h_band.size} tone(s) is too short for MUSIC.")
    if not np.any(h_band):
        raise EstimationError("Cannot decompose an all-zero band.")

    h = hankel(h_band, L)
    cov = h.conj().T @ h
    if forward_backward:
        cov = 0.5 * (cov + cov[::-1, ::-1].conj())
    w, v, _ = eig_hermitian(cov, solver=solver)
    if w[0] <= 0:
        raise EstimationError("Smoothed covariance has no positive eigenvalue.")

    signal_dim = int(np.count_nonzero(w >= threshold_ratio * w[0]))
    return SubspaceDecomposition(
        signal_basis=v[:, :signal_dim].conj(),
        noise_basis=v[:, signal_dim:].conj(),
        noise_dim=L - signal_dim,
        L=L,
        eigenvalues=w,
    )


def steering(tau: float, L: int, delta_omega: float) -> np.ndarray:  # noqa: N803
    """Steering vector with element n = exp(-j * delta_omega * n * tau)."""
    return np.exp(-1j * delta_omega * np.arange(L) * tau)


@lru_cache(maxsize=16)
def tau_grid(tau_max: float, tau_step: float) -> np.ndarray:
    """Read-only delay grid 0, step, 2 * step, ... up to tau_max."""
    n = math.floor(tau_max / tau_step + 1e-9) + 1
    grid = np.arange(n) * tau_step
    grid.flags.writeable = False
    return grid


@lru_cache(maxsize=64)
def _steering_matrix(L: int, delta_omega: float, tau_max: float, tau_step: float) -> np.ndarray:  # noqa: N803
    taus = tau_grid(tau_max, tau_step)
    matrix = np.exp(-1j * delta_omega * np.outer(np.arange(L), taus))
    matrix.flags.writeable = False
    return matrix


def _denominator(dec: SubspaceDecomposition, steer: np.ndarray, noise_form: bool = False) -> tuple[np.ndarray, bool]:
    if noise_form:
        denominator = np.sum(np.abs(dec.noise_basis.conj().T @ steer) ** 2, axis=0)
    else:
        denominator = dec.L - np.sum(np.abs(dec.signal_basis.conj().T @ steer) ** 2, axis=0)
    floor = CLAMP_FACTOR * dec.L
    clamped = bool(np.any(denominator < floor))
    return np.maximum(denominator, floor), clamped


def pseudospectrum(
    dec: SubspaceDecomposition,
    taus: np.ndarray,
    delta_omega: float,
    noise_form: bool = False,
) -> PseudoSpectrum:
    """J(tau) = 1 / (L - ||V_S^H e(tau)||^2), or 1 / ||V_N^H e(tau)||^2 in noise form.

    :param dec: The band decomposition.
    :param taus: The delay grid in seconds.
    :param delta_omega: The tone spacing in rad/s.
    :param noise_form: Project on the noise subspace instead.
    :return: The pseudospectrum; denominators are clamped at 1e-12 * L.
    """
    taus = np.asarray(taus, dtype=np.float64)
    steer = np.exp(-1j * delta_omega * np.outer(np.arange(dec.L), taus))
    denominator, clamped = _denominator(dec, steer, noise_form)
    if clamped:
        logger.debug("Pseudospectrum denominator clamped (L=%d, signal dim %d)", dec.L, dec.signal_dim)
    return PseudoSpectrum(tau_grid=taus, values=1.0 / denominator, clamped=clamped)


def _combine(denominators: list[np.ndarray], weights: list[int], method: CombineMethod) -> np.ndarray:
    if method == "mps":
        return 1.0 / np.prod(denominators, axis=0)
    if method == "wps":
        return 1.0 / np.sum([w * d for w, d in zip(weights, denominators, strict=True)], axis=0)
    raise ValueError(f"Unknown combination method {method!r}.")


def combined_pseudospectrum(
    decs: list[SubspaceDecomposition],
    taus: np.ndarray,
    delta_omega: float,
    method: CombineMethod,
    noise_form: bool = False,
) -> PseudoSpectrum:
    """Combine per-band subspaces into one pseudospectrum.

    `mps` multiplies the per-band denominators, `wps` sums them weighted by
    each band's smoothing factor.

    :raise EstimationError: If there is no decomposition to combine.
    """
    if not decs:
        raise EstimationError("No band decomposition to combine.")
    taus = np.asarray(taus, dtype=np.float64)
    denominators, clamped = [], False
    for dec in decs:
        steer = np.exp(-1j * delta_omega * np.outer(np.arange(dec.L), taus))
        denominator, band_clamped = _denominator(dec, steer, noise_form)
        denominators.append(denominator)
        clamped |= band_clamped
    values = _combine(denominators, [dec.L for dec in decs], method)
    return PseudoSpectrum(tau_grid=taus, values=values, clamped=clamped)


def _first_peak_index(values: np.ndarray, prominence_ratio: float) -> int:
    if values.size == 0:
        raise EstimationError("Empty pseudospectrum.")
    if values.size == 1:
        return 0

    candidates = list(find_peaks(values, plateau_size=1)[1]["left_edges"])
    if values[0] > values[1]:
        candidates.append(0)
    if values[-1] > values[-2]:
        candidates.append(values.size - 1)

    level = prominence_ratio * float(values.max())
    qualifying = [i for i in candidates if values[i] >= level]
    if not qualifying:
        raise EstimationError("Pseudospectrum has no qualifying peak.")
    return int(min(qualifying))


def first_peak(ps: PseudoSpectrum, prominence_ratio: float = 0.5) -> float:
    """Delay of the smallest-tau local maximum reaching `prominence_ratio` of the global maximum.

    A strictly falling (rising) edge of the grid counts as a local maximum and a
    flat maximum counts at its smallest tau.

    :raise EstimationError: If no local maximum qualifies.
    """
    return float(ps.tau_grid[_first_peak_index(ps.values, prominence_ratio)])


def _band_smoothing(band: ToneBand, cfg: MusicConfig) -> int:
    if cfg.smoothing_factor is not None:
        return min(cfg.smoothing_factor, band.length)
    return smoothing_factor(band.length)


def _single_band_inputs(resp: TwoWayResponse, mode: EstimatorMode) -> tuple[np.ndarray, list[ToneBand]]:
    grid = resp.grid
    if mode == "full" and not resp.available.all():
        raise EstimationError(f"Mode 'full' needs every tone, {int((~resp.available).sum())} are unavailable.")
    padded = TwoWayResponse(
        h_sq=np.where(resp.available, resp.h_sq, 0.0),
        available=np.ones(grid.K, dtype=bool),
        grid=grid,
    )
    band = ToneBand(a=0, b=grid.K - 1)
    return reconstruct_band(padded, band), [band]


def estimate_response(
    resp: TwoWayResponse,
    mode: EstimatorMode = "mps",
    cfg: MusicConfig | None = None,
) -> RangeEstimate:
    """Estimate the LoS delay from a two-way response.

    :param resp: The two-way response.
    :param mode: `full` needs every tone; `zero_pad` zeroes unavailable tones and
        runs single-band MUSIC; `mps` and `wps` combine per-band subspaces.
    :param cfg: The estimator settings.
    :raise NoDataError: If no tone is available.
    :raise EstimationError: If no band can be decomposed or no peak qualifies.
    :return: The estimate.
    """
    cfg = cfg or MusicConfig()
    grid: ToneGrid = resp.grid
    if not resp.available.any():
        raise NoDataError("No available tones.")

    skipped: list[ToneBand] = []
    if mode in ("full", "zero_pad"):
        h_tilde, bands = _single_band_inputs(resp, mode)
        segments = [h_tilde]
    elif mode in ("mps", "wps"):
        bands, segments = [], []
        for band in find_bands(resp.available):
            if band.length < cfg.min_band_len:
                logger.debug("Skipping band [%d, %d] shorter than %d tones", band.a, band.b, cfg.min_band_len)
                skipped.append(band)
                continue
            bands.append(band)
            segments.append(reconstruct_band(resp, band))
        if not bands:
            raise EstimationError(f"No band has at least {cfg.min_band_len} tones.")
    else:
        raise ValueError(f"Unknown estimator mode {mode!r}.")

    decs = [
        decompose(h, _band_smoothing(band, cfg), cfg.threshold_ratio, cfg.eig_solver, cfg.forward_backward)
        for band, h in zip(bands, segments, strict=True)
    ]

    denominators, clamped = [], False
    for dec in decs:
        steer = _steering_matrix(dec.L, grid.delta_omega, cfg.tau_max, cfg.tau_step)
        denominator, band_clamped = _denominator(dec, steer, cfg.noise_form)
        denominators.append(denominator)
        clamped |= band_clamped
    if clamped:
        logger.debug("Pseudospectrum denominator clamped in mode %s", mode)

    values = 1.0 / denominators[0] if len(decs) == 1 else _combine(denominators, [d.L for d in decs], mode)
    index = _first_peak_index(values, cfg.prominence_ratio)

    diagnostics = EstimateDiagnostics(
        mode=mode,
        bands=bands,
        skipped_bands=skipped,
        smoothing_factors=[dec.L for dec in decs],
        signal_dims=[dec.signal_dim for dec in decs],
        peak_index=index,
        clamped=clamped,
    )
    return RangeEstimate.from_delay(float(tau_grid(cfg.tau_max, cfg.tau_step)[index]), diagnostics)


def estimate_range(capture: IQCapture, mode: EstimatorMode = "mps", cfg: MusicConfig | None = None) -> RangeEstimate:
    """Estimate the distance between initiator and reflector from one capture."""
    return estimate_response(two_way(capture), mode, cfg)
