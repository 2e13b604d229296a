"""Saleh-Valenzuela channel realizations, IQ synthesis and tone-gap application."""

import logging
import math

import numpy as np

from phase_ranging.exceptions import DimensionError
from phase_ranging.models import ChannelRealization, GapMap, IQCapture, SVParams, ToneGrid

__all__ = (
    "sample_sv_channel",
    "sample_sv_batch",
    "channel_response",
    "batch_response",
    "synthesize_iq",
    "apply_gap_map",
    "db_to_linear",
)

logger = logging.getLogger(__name__)


def db_to_linear(value_db: float | np.ndarray) -> float | np.ndarray:
    return np.power(10.0, np.divide(value_db, 10.0))


def _nlos_profile(offsets: np.ndarray, rms_delay_spread: float) -> np.ndarray:
    """Exponential power-delay profile normalized to unit total power.

    An exponential profile with decay constant gamma has RMS delay spread gamma,
    so the decay constant is the configured spread.
    """
    power = np.exp(-offsets / rms_delay_spread)
    total = power.sum(axis=-1, keepdims=True)
    return np.divide(power, total, out=np.zeros_like(power), where=total > 0)


def sample_sv_channel(params: SVParams, rng_seed: int) -> ChannelRealization:
    """Draw one single-cluster Saleh-Valenzuela channel.

    Inter-ray gaps are exponential with mean `ray_rate_inv`, ray powers decay
    exponentially, ray amplitudes are circular complex Gaussian and the LoS
    path carries `rician_db` more power than all other rays together. The
    total expected power is one.

    :param params: The channel parameters.
    :param rng_seed: The seed; equal seeds give identical channels.
    :return: The channel realization, LoS path first.
    """
    rng = np.random.default_rng(rng_seed)
    n_rays = params.num_paths_cap - 1

    # Fixed draw counts keep the stream layout independent of the horizon.
    offsets = np.cumsum(rng.exponential(params.ray_rate_inv, size=n_rays))
    gains = (rng.standard_normal(n_rays) + 1j * rng.standard_normal(n_rays)) / math.sqrt(2.0)

    keep = offsets <= params.horizon
    offsets, gains = offsets[keep], gains[keep]

    rician = db_to_linear(params.rician_db)
    nlos = np.sqrt(_nlos_profile(offsets, params.rms_delay_spread) / (1.0 + rician)) * gains
    los = math.sqrt(rician / (1.0 + rician)) if offsets.size else 1.0

    return ChannelRealization(
        amplitudes=np.concatenate(([los], nlos)),
        delays=params.tau0 + np.concatenate(([0.0], offsets)),
    )


def sample_sv_batch(
    rng: np.random.Generator,
    tau0: np.ndarray,
    ray_rate_inv: np.ndarray,
    rician_db: np.ndarray,
    rms_delay_spread: float = 22e-9,
    num_paths_cap: int = 64,
    horizon_factor: float = 10.0,
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized `sample_sv_channel` for many channels with per-channel parameters.

    Paths beyond the horizon get zero amplitude instead of being dropped.

    :return: Amplitudes and delays, both of shape (n, num_paths_cap).
    """
    n = tau0.shape[0]
    n_rays = num_paths_cap - 1
    offsets = np.cumsum(rng.exponential(1.0, size=(n, n_rays)) * ray_rate_inv[:, None], axis=1)
    gains = (rng.standard_normal((n, n_rays)) + 1j * rng.standard_normal((n, n_rays))) / math.sqrt(2.0)

    inside = offsets <= horizon_factor * rms_delay_spread
    profile = _nlos_profile(np.where(inside, offsets, np.inf), rms_delay_spread)

    rician = db_to_linear(rician_db)[:, None]
    has_rays = inside.any(axis=1, keepdims=True)
    nlos = np.sqrt(profile / (1.0 + rician)) * gains * inside
    los = np.where(has_rays, np.sqrt(rician / (1.0 + rician)), 1.0)

    amplitudes = np.concatenate((los, nlos), axis=1)
    delays = tau0[:, None] + np.concatenate((np.zeros((n, 1)), offsets), axis=1)
    return amplitudes, delays


def channel_response(ch: ChannelRealization, grid: ToneGrid, tones: np.ndarray | None = None) -> np.ndarray:
    """Frequency response h_k = sum_m a_m exp(-j (w0 + k dw) tau_m).

    :param ch: The channel.
    :param grid: The tone grid.
    :param tones: Tone indices to evaluate; all K tones by default.
    :return: The complex response at the requested tones.
    """
    k = np.arange(grid.K) if tones is None else np.asarray(tones)
    freqs = grid.f0 + k * grid.delta_f
    return np.exp(-2j * np.pi * np.outer(freqs, ch.delays)) @ ch.amplitudes


def batch_response(amplitudes: np.ndarray, delays: np.ndarray, freqs: np.ndarray) -> np.ndarray:
    """Responses of a batch of channels, shape (n, F).

    `freqs` is either one frequency vector shared by all channels or an (n, F) array with one row per channel.
    """
    freqs = np.broadcast_to(np.atleast_2d(freqs), (amplitudes.shape[0], np.shape(freqs)[-1]))
    phase = np.exp(-2j * np.pi * delays[:, :, None] * freqs[:, None, :])
    return np.einsum("nm,nmf->nf", amplitudes, phase)


def synthesize_iq(ch: ChannelRealization, grid: ToneGrid, snr_db: float, rng_seed: int) -> IQCapture:
    """Initiator and reflector IQ with random per-tone PLL phase and complex Gaussian noise.

    The noise variance follows SNR = ((1/M) sum |a_m|^2) / N0. With `snr_db`
    equal to +inf no noise is added and iq_I * iq_R equals h^2.

    :param ch: The channel.
    :param grid: The tone grid.
    :param snr_db: The SNR in dB, or +inf.
    :param rng_seed: The seed for phases and noise.
    :raise ValueError: If the SNR is NaN or -inf.
    :return: The capture with every tone available.
    """
    if math.isnan(snr_db) or snr_db == -math.inf:
        raise ValueError(f"SNR must be finite or +inf, got {snr_db}.")

    rng = np.random.default_rng(rng_seed)
    h = channel_response(ch, grid)
    rotation = np.exp(-1j * rng.uniform(0.0, 2 * np.pi, size=grid.K))
    iq_initiator = rotation * h
    iq_reflector = rotation.conj() * h

    if math.isfinite(snr_db):
        n0 = ch.signal_power / db_to_linear(snr_db)
        scale = math.sqrt(n0 / 2.0)
        iq_initiator = iq_initiator + scale * (rng.standard_normal(grid.K) + 1j * rng.standard_normal(grid.K))
        iq_reflector = iq_reflector + scale * (rng.standard_normal(grid.K) + 1j * rng.standard_normal(grid.K))

    return IQCapture(
        iq_initiator=iq_initiator,
        iq_reflector=iq_reflector,
        available=np.ones(grid.K, dtype=bool),
        interfered=np.zeros(grid.K, dtype=bool),
        grid=grid,
    )


def apply_gap_map(capture: IQCapture, gaps: GapMap, interference_snr_db: float, rng_seed: int) -> IQCapture:
    """Mark missing tones (IQ zeroed) and corrupt interfered tones with Gaussian interference.

    :param capture: The capture to degrade.
    :param gaps: The tone gaps.
    :param interference_snr_db: Signal-to-interference ratio on interfered tones, in dB.
    :param rng_seed: The seed for the interference waveform.
    :raise DimensionError: If a gap lies outside the grid.
    :return: A new capture; tones outside the gaps are untouched.
    """
    if not gaps.gaps:
        return capture
    K = capture.grid.K  # noqa: N806
    try:
        missing = gaps.mask(K, "missing")
        interfered = gaps.mask(K, "interfered")
    except ValueError as e:
        raise DimensionError(str(e)) from None

    iq_initiator = capture.iq_initiator.copy()
    iq_reflector = capture.iq_reflector.copy()
    iq_initiator[missing] = 0.0
    iq_reflector[missing] = 0.0

    n = int(interfered.sum())
    if n:
        rng = np.random.default_rng(rng_seed)
        reference = capture.available & ~missing
        power = float(np.mean(np.abs(capture.iq_initiator[reference]) ** 2)) if reference.any() else 1.0
        scale = math.sqrt(power / db_to_linear(interference_snr_db) / 2.0)
        iq_initiator[interfered] += scale * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
        iq_reflector[interfered] += scale * (rng.standard_normal(n) + 1j * rng.standard_normal(n))

    logger.debug("Applied gap map %s: %d missing, %d interfered tones", gaps, int(missing.sum()), n)
    return IQCapture(
        iq_initiator=iq_initiator,
        iq_reflector=iq_reflector,
        available=capture.available & ~missing & ~interfered,
        interfered=(capture.interfered | interfered) & ~missing,
        grid=capture.grid,
    )
