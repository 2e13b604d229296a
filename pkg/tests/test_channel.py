import math

import numpy as np
import pytest
from pydantic import ValidationError

from phase_ranging.channel import (
    apply_gap_map,
    channel_response,
    db_to_linear,
    sample_sv_batch,
    sample_sv_channel,
    synthesize_iq,
)
from phase_ranging.exceptions import DimensionError
from phase_ranging.models import ChannelRealization, GapMap, SVParams, ToneGap, ToneGrid


def test_sv_channel_is_deterministic():
    params = SVParams()
    a, b = sample_sv_channel(params, 42), sample_sv_channel(params, 42)
    np.testing.assert_array_equal(a.amplitudes, b.amplitudes)
    np.testing.assert_array_equal(a.delays, b.delays)
    assert not np.array_equal(a.amplitudes, sample_sv_channel(params, 43).amplitudes)


def test_sv_channel_starts_at_los_delay():
    ch = sample_sv_channel(SVParams(tau0=20e-9), 3)
    assert ch.delays[0] == 20e-9
    assert np.all(np.diff(ch.delays) > 0)
    assert ch.delays[-1] <= 20e-9 + SVParams().horizon
    assert ch.M <= SVParams().num_paths_cap


def test_sv_channel_rician_dominance():
    ch = sample_sv_channel(SVParams(rician_db=60.0), 5)
    los, nlos = abs(ch.amplitudes[0]) ** 2, np.sum(np.abs(ch.amplitudes[1:]) ** 2)
    assert los / nlos > 1e5


def test_sv_rician_ratio_in_aggregate():
    los, nlos = 0.0, 0.0
    for seed in range(1000):
        ch = sample_sv_channel(SVParams(rician_db=10.0), seed)
        los += abs(ch.amplitudes[0]) ** 2
        nlos += np.sum(np.abs(ch.amplitudes[1:]) ** 2)
    assert 10 * math.log10(los / nlos) == pytest.approx(10.0, abs=0.2)


def test_sv_inter_ray_gap_mean():
    rng = np.random.default_rng(0)
    n = 2000
    _, delays = sample_sv_batch(rng, np.full(n, 20e-9), np.full(n, 4e-9), np.zeros(n))
    gaps = np.diff(delays, axis=1)
    assert gaps.mean() == pytest.approx(4e-9, rel=0.02)


def test_sv_batch_drops_rays_beyond_horizon():
    rng = np.random.default_rng(1)
    amplitudes, delays = sample_sv_batch(rng, np.full(50, 1e-9), np.full(50, 10e-9), np.zeros(50))
    beyond = delays - 1e-9 > 10 * 22e-9
    assert beyond.any()
    assert np.all(amplitudes[beyond] == 0)
    np.testing.assert_allclose(amplitudes[:, 0], math.sqrt(0.5))


def test_channel_response_selected_tones(two_path_channel, grid):
    full = channel_response(two_path_channel, grid)
    np.testing.assert_allclose(channel_response(two_path_channel, grid, np.array([3, 40])), full[[3, 40]])


def test_noiseless_two_way_identity(two_path_channel, grid):
    h = channel_response(two_path_channel, grid)
    for seed in range(5):
        capture = synthesize_iq(two_path_channel, grid, math.inf, seed)
        np.testing.assert_allclose(capture.iq_initiator * capture.iq_reflector, h**2, rtol=1e-12)
        assert capture.available.all()
        assert not capture.interfered.any()


def test_noise_follows_snr():
    grid = ToneGrid(K=100_000)
    ch = ChannelRealization(amplitudes=[1.0], delays=[20e-9])
    clean = synthesize_iq(ch, grid, math.inf, 11)
    noisy = synthesize_iq(ch, grid, 20.0, 11)
    noise = noisy.iq_initiator - clean.iq_initiator
    snr_db = 10 * math.log10(ch.signal_power / np.mean(np.abs(noise) ** 2))
    assert snr_db == pytest.approx(20.0, abs=0.1)


def test_unit_snr_definition():
    ch = ChannelRealization(amplitudes=[1.0], delays=[20e-9])
    assert ch.signal_power == 1.0
    assert db_to_linear(0.0) == 1.0


@pytest.mark.parametrize("snr_db", [math.nan, -math.inf])
def test_invalid_snr(los_channel, grid, snr_db):
    with pytest.raises(ValueError, match="SNR"):
        synthesize_iq(los_channel, grid, snr_db, 0)


def test_gap1_marks_missing_tones(noiseless_capture):
    gapped = apply_gap_map(noiseless_capture, GapMap.from_preset("gap1"), 0.0, 0)
    assert int((~gapped.available).sum()) == 8
    assert int(gapped.available.sum()) == 72
    assert not gapped.interfered.any()
    missing = ~gapped.available
    assert np.all(gapped.iq_initiator[missing] == 0)
    assert np.all(gapped.iq_reflector[missing] == 0)
    np.testing.assert_array_equal(gapped.iq_initiator[~missing], noiseless_capture.iq_initiator[~missing])


def test_gap5_interferes_without_touching_other_tones(noiseless_capture):
    gaps = GapMap.from_preset("gap5")
    assert len(gaps) == 11

    gapped = apply_gap_map(noiseless_capture, gaps, 0.0, 3)
    interfered = gaps.mask(80, "interfered")
    np.testing.assert_array_equal(gapped.interfered, interfered)
    assert not gapped.available[gaps.mask(80)].any()
    assert np.all(gapped.iq_initiator[interfered] != noiseless_capture.iq_initiator[interfered])

    untouched = ~gaps.mask(80)
    np.testing.assert_array_equal(gapped.iq_initiator[untouched], noiseless_capture.iq_initiator[untouched])
    np.testing.assert_array_equal(gapped.iq_reflector[untouched], noiseless_capture.iq_reflector[untouched])


def test_empty_gap_map_is_identity(noiseless_capture):
    assert apply_gap_map(noiseless_capture, GapMap(), 0.0, 0) is noiseless_capture


def test_gap_outside_grid(noiseless_capture):
    with pytest.raises(DimensionError):
        apply_gap_map(noiseless_capture, GapMap.parse("79:80"), 0.0, 0)


def test_overlapping_gaps_rejected():
    with pytest.raises(ValidationError, match="overlap"):
        GapMap(gaps=[ToneGap(first=3, last=5), ToneGap(first=5, last=6, kind="interfered")])


def test_gap_map_parse():
    gaps = GapMap.parse("24:26, !32, 0:2, !29:30")
    assert [str(g) for g in gaps.gaps] == ["0:2", "24:26", "!29:30", "!32"]
    assert str(gaps) == "0:2,24:26,!29:30,!32"
    assert GapMap.parse("gap2") == GapMap.from_preset("gap2")


@pytest.mark.parametrize("text", ["3:a", "5:2"])
def test_gap_map_parse_errors(text):
    with pytest.raises(ValueError, match="Invalid gap block"):
        GapMap.parse(text)


def test_unknown_preset():
    with pytest.raises(ValueError, match="Unknown gap preset"):
        GapMap.from_preset("gap9")


def test_channel_rejects_unsorted_delays():
    with pytest.raises(ValidationError):
        ChannelRealization(amplitudes=[1.0, 0.5], delays=[30e-9, 20e-9])


def test_grid_rejects_bad_spacing():
    with pytest.raises(ValidationError):
        ToneGrid(delta_f=0.0)
