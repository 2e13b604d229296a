import logging
import math
import struct

import numpy as np
import pytest
from pydantic import ValidationError

from phase_ranging.channel import channel_response
from phase_ranging.exceptions import BankFormatError, DimensionError, UnrecoverableGapError
from phase_ranging.models import GapMap, ToneGrid, TwoWayResponse
from phase_ranging.recovery.nn import (
    AdamOptimizer,
    NNBank,
    NNConfig,
    NNModel,
    NNParams,
    NNRecovery,
    TrainingConfig,
    bank_param_count,
    load_bank,
    loss_and_gradients,
    make_dataset,
    recover_gaps,
    recover_window,
    sample_windows,
    save_bank,
    train_bank,
    train_model,
)


def interior_bank(max_width: int, hidden: int, seed: int = 0) -> NNBank:
    rng = np.random.default_rng(seed)
    models = [NNModel.initialize(w, hidden, "interior", rng) for w in range(1, max_width + 1)]
    return NNBank(max_width=max_width, hidden=hidden, models=models)


def response(h_sq: np.ndarray, gaps: GapMap) -> TwoWayResponse:
    available = ~gaps.mask(h_sq.size)
    return TwoWayResponse(h_sq=np.where(available, h_sq, 0), available=available, grid=ToneGrid(K=h_sq.size))


@pytest.mark.parametrize(("T", "H", "expected"), [(10, 20, 7570), (1, 1, 21)])
def test_bank_param_count(T, H, expected):
    assert bank_param_count(T, H) == expected


def test_bank_storage():
    bank = interior_bank(10, 20)
    assert bank.param_count() == 7570
    assert bank.storage_bytes("float32") == 30280
    assert bank.storage_bytes("float64") == 60560


@pytest.mark.parametrize("width", [1, 4, 10])
def test_model_param_count(width):
    model = NNModel.initialize(width, 20, "interior", np.random.default_rng(0))
    assert model.param_count == 6 * 20 * width + (20 + 2 * width) + 12 * width
    assert model.input_dim == 4 * width
    assert model.output_dim == 2 * width


def test_flop_counter():
    model = NNModel.initialize(10, 20, "interior", np.random.default_rng(0))
    assert model.flops == 2520
    assert model.flop_count == 0
    model.forward(np.ones(10), np.ones(10))
    assert model.flop_count == 2520
    model.predict(np.zeros((3, 40)))
    assert model.flop_count == 4 * 2520


def test_affine_collapse():
    model = NNModel.initialize(2, 4, "interior", np.random.default_rng(0))
    zero = {name: np.zeros_like(p) for name, p in model.params._asdict().items()}
    m = np.array([0.5, -1.0, 2.0, 3.0])
    model = model.model_copy(update={**zero, "out_mean": m})
    rng = np.random.default_rng(1)
    np.testing.assert_array_equal(model.predict(rng.standard_normal((5, 8))), np.tile(m, (5, 1)))
    for before, after in [(np.zeros(2), np.zeros(2)), (rng.standard_normal(2) * 40, 1j * rng.standard_normal(2))]:
        np.testing.assert_array_equal(model.forward(before, after), [0.5 + 2j, -1 + 3j])


def test_forward_width_mismatch():
    model = NNModel.initialize(2, 4, "interior", np.random.default_rng(0))
    with pytest.raises(DimensionError):
        model.forward(np.ones(2), np.ones(3))
    with pytest.raises(DimensionError):
        model.predict_gap(np.ones(5))


def test_model_shape_validation():
    model = NNModel.initialize(2, 4, "interior", np.random.default_rng(0))
    with pytest.raises(ValidationError):
        NNModel(**{**model.model_dump(), "bias_out": np.zeros(3)})
    with pytest.raises(ValidationError, match="strictly positive"):
        NNModel(**{**model.model_dump(), "in_std": np.zeros(8)})


def test_standardization_round_trip():
    rng = np.random.default_rng(3)
    model = NNModel.initialize(2, 4, "interior", rng).model_copy(
        update={"in_mean": rng.standard_normal(8), "in_std": rng.random(8) + 0.1}
    )
    x = rng.standard_normal((4, 8))
    np.testing.assert_allclose(model.standardize(x) * model.in_std + model.in_mean, x, atol=1e-12)
    y = rng.standard_normal((4, 4))
    np.testing.assert_allclose((model.destandardize(y) - model.out_mean) / model.out_std, y, atol=1e-12)


def test_gradient_check():
    rng = np.random.default_rng(5)
    params = NNModel.initialize(2, 4, "interior", rng).params
    params = NNParams(*(p + 0.1 * rng.standard_normal(p.shape) for p in params))
    x, y = rng.standard_normal((16, 8)), rng.standard_normal((16, 4))
    _, grads = loss_and_gradients(params, x, y)

    eps = 1e-6
    for i, p in enumerate(params):
        numeric = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            plus = [q.copy() for q in params]
            minus = [q.copy() for q in params]
            plus[i][idx] += eps
            minus[i][idx] -= eps
            loss_plus = loss_and_gradients(NNParams(*plus), x, y)[0]
            loss_minus = loss_and_gradients(NNParams(*minus), x, y)[0]
            numeric[idx] = (loss_plus - loss_minus) / (2 * eps)
        np.testing.assert_allclose(grads[i], numeric, rtol=1e-5, atol=1e-9)


def test_adam_moves_against_gradient():
    params = NNParams(np.ones((1, 4)), np.zeros(1), np.ones((2, 1)), np.zeros(2))
    grads = NNParams(*(np.ones_like(p) for p in params))
    updated = AdamOptimizer(params, lr=0.1).step(params, grads)
    for before, after in zip(params, updated, strict=True):
        np.testing.assert_allclose(after, before - 0.1, rtol=1e-6)


def test_sample_windows_noiseless():
    cfg = TrainingConfig(snr_db_range=(300.0, 300.0), chunk_size=7)
    noisy, clean = sample_windows(np.random.default_rng(0), 20, 6, cfg)
    assert noisy.shape == clean.shape == (20, 6)
    np.testing.assert_allclose(noisy, clean, atol=1e-12)


def test_sample_windows_too_long():
    with pytest.raises(DimensionError):
        sample_windows(np.random.default_rng(0), 2, 81, TrainingConfig())


@pytest.mark.parametrize("variant", ["interior", "edge"])
def test_dataset_shapes(variant):
    data = make_dataset(3, variant, 50, TrainingConfig(chunk_size=20), np.random.default_rng(0))
    assert data.features.shape == (50, 12)
    assert data.targets.shape == (50, 6)
    assert data.clean.shape == (50, 3)
    # The tone next to the gap is rotated onto the positive real axis.
    anchor = 2 if variant == "interior" else 0
    assert np.all(data.features[:, anchor] > 0)
    np.testing.assert_allclose(data.features[:, anchor + 3], 0, atol=1e-12)


def test_tiny_bank(tiny_bank, tiny_training):
    assert tiny_bank.max_width == 3
    assert tiny_bank.has_edge
    assert len(tiny_bank.models) == 6
    for model in tiny_bank.models:
        assert model.hidden == tiny_training.hidden
        assert model.validation_nmse is not None and math.isfinite(model.validation_nmse)
        assert np.all(model.in_std > 0) and np.all(model.out_std > 0)


def test_training_is_deterministic(tiny_training):
    cfg = tiny_training.model_copy(update={"max_width": 1, "edge_variants": False})
    a = train_model(1, "interior", cfg, np.random.default_rng(9))
    b = train_model(1, "interior", cfg, np.random.default_rng(9))
    for name in ("weights_in", "bias_hidden", "weights_out", "bias_out", "in_mean", "out_std"):
        np.testing.assert_array_equal(getattr(a, name), getattr(b, name))


def test_bank_validation():
    rng = np.random.default_rng(0)
    with pytest.raises(ValidationError, match="1..2"):
        NNBank(max_width=2, hidden=4, models=[NNModel.initialize(1, 4, "interior", rng)])
    with pytest.raises(UnrecoverableGapError):
        interior_bank(2, 4).model(1, "edge")


def test_bank_round_trip(tiny_bank, tmp_path):
    path = tmp_path / "bank.bin"
    save_bank(tiny_bank, path)
    assert path.stat().st_size == 13 + sum(11 + 8 * m.param_count for m in tiny_bank.models)

    loaded = load_bank(path)
    x = np.random.default_rng(2).standard_normal((5, 12))
    for original in tiny_bank.models:
        copy = loaded.model(original.width, original.variant)
        assert copy.validation_nmse == original.validation_nmse
        np.testing.assert_array_equal(copy.predict(x[:, : 4 * copy.width]), original.predict(x[:, : 4 * copy.width]))


def test_single_precision_bank(tiny_bank, tmp_path):
    path = tmp_path / "bank32.bin"
    save_bank(tiny_bank, path, "float32")
    loaded = load_bank(path)
    for original in tiny_bank.models:
        copy = loaded.model(original.width, original.variant)
        np.testing.assert_allclose(copy.weights_in, original.weights_in, rtol=1e-6)


def test_bank_format_errors(tiny_bank, tmp_path):
    path = tmp_path / "bank.bin"
    save_bank(tiny_bank, path)
    data = path.read_bytes()

    cases = {
        "truncated header": data[:5],
        "magic": b"XXXX" + data[4:],
        "version": data[:4] + struct.pack("<H", 9) + data[6:],
        "truncated parameters": data[:-1],
        "trailing bytes": data + b"\0",
    }
    for message, content in cases.items():
        path.write_bytes(content)
        with pytest.raises(BankFormatError, match=message):
            load_bank(path)


class TestRecoverGaps:
    @pytest.fixture
    def h_sq(self, two_path_channel):
        return channel_response(two_path_channel, ToneGrid()) ** 2

    def test_empty_gap_map(self, h_sq, tiny_bank):
        resp = response(h_sq, GapMap())
        assert recover_gaps(resp, GapMap(), tiny_bank) is resp

    def test_interior_gaps(self, h_sq, tiny_bank):
        gaps = GapMap.parse("24:26,29:30,32,34:35")
        recovered = recover_gaps(response(h_sq, gaps), gaps, tiny_bank)
        assert recovered.available.all()
        assert np.all(np.isfinite(recovered.h_sq))
        mask = gaps.mask(80)
        np.testing.assert_array_equal(recovered.h_sq[~mask], h_sq[~mask])
        assert tiny_bank.model(3, "interior").flop_count > 0

    def test_edge_gaps(self, h_sq, tiny_bank):
        gaps = GapMap.parse("0:2,78:79")
        recovered = recover_gaps(response(h_sq, gaps), gaps, tiny_bank)
        assert recovered.available.all()
        assert tiny_bank.model(3, "edge").flop_count > 0
        assert tiny_bank.model(2, "edge").flop_count > 0

    def test_matches_manual_forward(self, h_sq, tiny_bank):
        gaps = GapMap.parse("40")
        recovered = recover_gaps(response(h_sq, gaps), gaps, tiny_bank)
        ctx = h_sq[[39, 41]]
        scale = np.sqrt(np.mean(np.abs(ctx) ** 2)) * np.exp(1j * np.angle(h_sq[39]))
        expected = tiny_bank.model(1).forward(ctx[:1] / scale, ctx[1:] / scale) * scale
        np.testing.assert_allclose(recovered.h_sq[40:41], expected)

    def test_upper_edge_mirrors_lower_edge(self, h_sq, tiny_bank):
        gaps = GapMap.parse("79")
        recovered = recover_gaps(response(h_sq, gaps), gaps, tiny_bank)
        mirrored = recover_window(tiny_bank.model(1, "edge"), h_sq[77:79][::-1].conj()).conj()
        np.testing.assert_allclose(recovered.h_sq[79:80], mirrored)

    def test_unscheduled_order(self, h_sq, tiny_bank):
        gaps = GapMap.parse("24:26,29:30,32,34:35")
        scheduled = recover_gaps(response(h_sq, gaps), gaps, tiny_bank)
        unscheduled = recover_gaps(response(h_sq, gaps), gaps, tiny_bank, schedule=False)
        assert unscheduled.available.all()
        # {32} is recovered from true tones either way.
        np.testing.assert_allclose(unscheduled.h_sq[32], scheduled.h_sq[32])
        assert not np.allclose(unscheduled.h_sq[24:27], scheduled.h_sq[24:27])

    def test_too_wide_gap(self, h_sq, tiny_bank, caplog):
        gaps = GapMap.parse("10:14,40")
        with caplog.at_level(logging.WARNING, logger="phase_ranging.recovery.nn"):
            recovered = recover_gaps(response(h_sq, gaps), gaps, tiny_bank)
        assert "cannot be recovered" in caplog.text
        assert not recovered.available[10:15].any()
        assert recovered.available[40]

        with pytest.raises(UnrecoverableGapError):
            recover_gaps(response(h_sq, gaps), gaps, tiny_bank, strict=True)

    def test_edge_gap_without_edge_models(self, h_sq):
        gaps = GapMap.parse("0:1")
        with pytest.raises(UnrecoverableGapError):
            recover_gaps(response(h_sq, gaps), gaps, interior_bank(3, 4), strict=True)


def test_nn_recovery_loads_bank(tiny_bank, tmp_path, two_path_channel):
    path = tmp_path / "bank.bin"
    save_bank(tiny_bank, path)
    gaps = GapMap.parse("30:31")
    h_sq = channel_response(two_path_channel, ToneGrid()) ** 2

    recovered = NNRecovery(NNConfig(bank_path=path)).recover(response(h_sq, gaps), gaps)
    assert recovered.available.all()
    with pytest.raises(FileNotFoundError):
        NNRecovery(NNConfig(bank_path=tmp_path / "missing.bin")).recover(response(h_sq, gaps), gaps)


@pytest.mark.slow
def test_width_one_model_phase_error():
    cfg = TrainingConfig(
        max_width=1,
        snr_db_range=(300.0, 300.0),
        rician_db_range=(60.0, 60.0),
        n_train=20_000,
        n_validation=2_000,
        epochs=20,
        edge_variants=False,
    )
    rng = np.random.default_rng(0)
    model = train_model(1, "interior", cfg, rng)
    noisy, clean = sample_windows(rng, 2_000, 3, cfg)
    predicted = recover_window(model, noisy[:, [0, 2]])[:, 0]
    assert np.median(np.abs(np.angle(predicted * clean[:, 1].conj()))) < 0.05


@pytest.mark.slow
def test_width_matched_model_wins():
    cfg = TrainingConfig(max_width=3, n_train=20_000, n_validation=2_000, epochs=10, edge_variants=False)
    bank = train_bank(cfg, 0)
    noisy, clean = sample_windows(np.random.default_rng(1), 5_000, 9, cfg)

    narrow = recover_window(bank.model(1), noisy[:, [3, 5]])[:, 0]
    wide = recover_window(bank.model(3), np.concatenate((noisy[:, 0:3], noisy[:, 6:9]), axis=1))[:, 1]

    def nmse(estimate: np.ndarray) -> float:
        return float(np.sum(np.abs(estimate - clean[:, 4]) ** 2) / np.sum(np.abs(clean[:, 4]) ** 2))

    assert nmse(narrow) < nmse(wide)
