"""Two-way response and per-band one-way channel reconstruction."""

import numpy as np

from phase_ranging.exceptions import DimensionError
from phase_ranging.models import IQCapture, ReconstructedChannel, ToneBand, TwoWayResponse

__all__ = (
    "two_way",
    "find_bands",
    "reconstruct_band",
    "reconstruct",
)


def two_way(capture: IQCapture) -> TwoWayResponse:
    """h^2 = IQ_R * IQ_I on available tones; the PLL phase cancels in the product."""
    h_sq = np.where(capture.available, capture.iq_reflector * capture.iq_initiator, 0.0)
    return TwoWayResponse(h_sq=h_sq, available=capture.available.copy(), grid=capture.grid)


def find_bands(mask: np.ndarray) -> list[ToneBand]:
    """Maximal runs of available tones in ascending order.

    :param mask: Availability per tone.
    :return: The bands; empty when no tone is available.
    """
    padded = np.concatenate(([False], np.asarray(mask, dtype=bool), [False])).astype(np.int8)
    edges = np.diff(padded)
    starts = np.flatnonzero(edges == 1)
    stops = np.flatnonzero(edges == -1) - 1
    return [ToneBand(a=int(a), b=int(b)) for a, b in zip(starts, stops, strict=True)]


def reconstruct_band(h_sq: TwoWayResponse, band: ToneBand) -> np.ndarray:
    """Square root of h^2 over one band with signs chosen to keep the phase progression smooth.

    The first tone takes the principal root. Every later tone takes the root
    whose phase step from the previous nonzero tone lies in (-pi/2, pi/2].
    Zero tones stay zero and the next tone is compared to the last nonzero one.
    The result equals the true one-way channel up to one sign per band.

    :param h_sq: The two-way response.
    :param band: The band, all of whose tones must be available.
    :raise DimensionError: If the band holds unavailable tones or leaves the grid.
    :return: The reconstructed channel for tones a..b.
    """
    if band.b >= h_sq.grid.K or not h_sq.available[band.index_slice].all():
        raise DimensionError(f"Band [{band.a}, {band.b}] must consist of available tones inside the grid.")

    roots = np.sqrt(h_sq.h_sq[band.index_slice])
    h_tilde = np.empty_like(roots)
    reference: complex | None = None
    for i, root in enumerate(roots):
        if reference is not None:
            step = root * np.conj(reference)
            if step.real < 0 or (step.real == 0 and step.imag < 0):
                root = -root
        h_tilde[i] = root
        if root != 0:
            reference = root
    return h_tilde


def reconstruct(h_sq: TwoWayResponse) -> ReconstructedChannel:
    """Reconstruct every available band; tones outside the bands are zero."""
    bands = find_bands(h_sq.available)
    h_tilde = np.zeros(h_sq.grid.K, dtype=np.complex128)
    for band in bands:
        h_tilde[band.index_slice] = reconstruct_band(h_sq, band)
    return ReconstructedChannel(h_tilde=h_tilde, bands=bands)
