import math

import numpy as np
import pytest

from phase_ranging.capture_io import write_capture
from phase_ranging.channel import apply_gap_map
from phase_ranging.constants import SPEED_OF_LIGHT
from phase_ranging.exceptions import NoDataError
from phase_ranging.exporter import Exporter
from phase_ranging.harness import (
    compute_metrics,
    gaps_from_capture,
    process_capture_file,
    realization_seeds,
    run_benchmark,
    run_experiment,
    sweep_smoothing,
)
from phase_ranging.models import GapMap
from phase_ranging.music import MusicConfig
from phase_ranging.reconstruct import two_way
from phase_ranging.recovery import NNBank, TrainingConfig, save_bank, train_bank
from phase_ranging.settings import ExperimentConfig

pytestmark = pytest.mark.filterwarnings("ignore:.*realizations give very noisy:UserWarning")

GRID_STEP_M = SPEED_OF_LIGHT * MusicConfig().tau_step


def small_config(tmp_path, **values) -> ExperimentConfig:
    return ExperimentConfig(
        realizations=values.pop("realizations", 4),
        music={"eig_solver": "lapack"},
        output_dir=tmp_path / "results",
        **values,
    )


@pytest.fixture
def capture_file(noiseless_capture, tmp_path):
    def write(gaps: str):
        path = tmp_path / f"capture_{gaps.replace(':', '_')}.txt"
        write_capture(apply_gap_map(noiseless_capture, GapMap.parse(gaps), 0.0, 0), path)
        return path

    return write


def test_compute_metrics():
    metrics = compute_metrics("mps", [-1.0, 1.0, 2.0], failures=1)
    assert metrics.count == 3
    assert metrics.failures == 1
    assert metrics.rmse_m == pytest.approx(math.sqrt(2))
    assert metrics.median_m == 1.0
    assert metrics.bias_m == 1.0
    assert metrics.q90_m == pytest.approx(2.7)
    assert metrics.cdf_errors == [1.0, 1.0, 2.0]
    assert metrics.cdf_probs == pytest.approx([1 / 3, 2 / 3, 1.0])


def test_compute_metrics_without_estimates():
    metrics = compute_metrics("nn", [], failures=2)
    assert metrics.count == 0
    assert metrics.failures == 2
    assert math.isnan(metrics.rmse_m) and math.isnan(metrics.median_m)
    assert metrics.cdf_errors == []


def test_realization_seeds():
    assert realization_seeds(0, 3) == realization_seeds(0, 3)
    assert realization_seeds(0, 3) != realization_seeds(0, 4)
    assert realization_seeds(0, 3) != realization_seeds(1, 3)
    assert len(set(realization_seeds(5, 0))) == 3


def test_run_experiment(tmp_path):
    cfg = small_config(tmp_path)
    report = run_experiment(cfg)

    assert report.realizations == 4
    assert report.gaps == str(GapMap.from_preset("gap1"))
    assert list(report.metrics) == cfg.schemes
    assert len(report.records) == 4 * len(cfg.schemes)
    for record in report.records:
        assert record.truth_m == pytest.approx(6.0)
        assert record.failure is None
        assert np.isfinite(record.error_m)
    assert report == run_experiment(cfg)


def test_experiment_without_gaps(tmp_path):
    report = run_experiment(small_config(tmp_path, schemes=["reference"], gaps="", preset=None))
    assert report.gaps == ""
    assert report.metrics["reference"].count == 4


def test_workers_do_not_change_results(tmp_path):
    serial = run_experiment(small_config(tmp_path, realizations=6))
    parallel = run_experiment(small_config(tmp_path, realizations=6, workers=2))
    assert serial.records == parallel.records


def test_anm_scheme(tmp_path):
    cfg = small_config(
        tmp_path,
        realizations=2,
        schemes=["zero_pad", "anm"],
        recoveries={"anm": {"max_iter": 200, "eig_solver": "lapack"}},
    )
    report = run_experiment(cfg)
    assert report.metrics["anm"].count + report.metrics["anm"].failures == 2


def test_nn_scheme_needs_a_bank(tmp_path):
    with pytest.raises(FileNotFoundError):
        run_experiment(small_config(tmp_path, schemes=["nn"]))


def test_nn_schemes(tmp_path, tiny_bank):
    cfg = small_config(tmp_path, realizations=3, schemes=["nn", "nn_unscheduled"])
    report = run_experiment(cfg, bank=tiny_bank)
    assert report.metrics["nn"].count == 3
    assert report.metrics["nn_unscheduled"].count == 3

    path = tmp_path / "bank.bin"
    save_bank(tiny_bank, path)
    cfg = small_config(
        tmp_path,
        realizations=3,
        schemes=["nn", "nn_unscheduled"],
        recoveries={"nn": {"bank_path": path}},
    )
    from_file = run_experiment(cfg)
    assert from_file.records == report.records


def test_failures_are_recorded(tmp_path):
    report = run_experiment(small_config(tmp_path, realizations=2, schemes=["mps", "reference"], gaps="0:79"))
    assert report.metrics["mps"].failures == 2
    assert report.metrics["mps"].count == 0
    assert all(r.failure for r in report.records if r.scheme == "mps")
    assert report.metrics["reference"].count == 2


def test_rician_sweep(tmp_path):
    reports = run_benchmark(small_config(tmp_path, realizations=2, channel={"rician_db_list": [-5.0, 10.0]}))
    assert [r.rician_db for r in reports] == [-5.0, 10.0]


def test_smoothing_sweep(tmp_path):
    rows = sweep_smoothing(small_config(tmp_path, realizations=2), [0.1, 0.9])
    assert [row.L for row in rows] == [9, 73]
    assert all(row.failures == 0 for row in rows)
    with pytest.raises(ValueError, match="fraction"):
        sweep_smoothing(small_config(tmp_path, realizations=2), [1.0])


def test_smoothing_sweep_near_single_path(tmp_path):
    cfg = small_config(tmp_path, realizations=5, channel={"rician_db": 60.0, "snr_db": math.inf})
    (row,) = sweep_smoothing(cfg, [0.5])
    assert row.L == 41
    assert row.median_m < 0.01


def test_gaps_from_capture(noiseless_capture):
    gaps = GapMap.parse("0:2,!10:11,30,!50")
    gapped = apply_gap_map(noiseless_capture, gaps, 0.0, 1)
    assert gaps_from_capture(two_way(gapped), gapped.interfered) == gaps
    assert str(gaps_from_capture(two_way(gapped))) == "0:2,10:11,30,50"


def test_process_capture_file(capture_file):
    estimate = process_capture_file(capture_file("gap1"), "mps")
    assert abs(estimate.distance_m - 6.0) <= GRID_STEP_M

    estimate = process_capture_file(capture_file("72:79"), "wps")
    assert estimate.diagnostics.smoothing_factors == [37]


def test_process_capture_file_with_recovery(capture_file, tiny_bank, tmp_path):
    path = capture_file("30:31")
    estimate = process_capture_file(path, "anm", eig_solver="lapack")
    assert abs(estimate.distance_m - 6.0) < 0.1
    assert estimate.diagnostics.mode == "zero_pad"

    bank_path = tmp_path / "bank.bin"
    save_bank(tiny_bank, bank_path)
    assert np.isfinite(process_capture_file(path, "nn", bank_path).distance_m)
    with pytest.raises(FileNotFoundError):
        process_capture_file(path, "nn")


def test_process_capture_without_tones(capture_file):
    with pytest.raises(NoDataError):
        process_capture_file(capture_file("0:79"), "mps")


def test_exporter(tmp_path):
    cfg = small_config(tmp_path, realizations=3)
    reports = [run_experiment(cfg)]
    files = Exporter(cfg).run_all(reports)

    names = {f.name for f in files}
    assert names == {"runs.csv", "summary.md"} | {f"cdf_{s}.csv" for s in cfg.schemes}
    runs = (cfg.output_dir / "runs.csv").read_text().splitlines()
    assert runs[0] == "mode,realization,truth_m,estimate_m,error_m"
    assert len(runs) == 1 + 3 * len(cfg.schemes)
    assert "| Rician (dB)" in (cfg.output_dir / "summary.md").read_text()

    assert Exporter(cfg).run_all(reports) == []

    other = cfg.model_copy(update={"output_dir": tmp_path / "again"})
    Exporter(other).run_all([run_experiment(other)])
    assert (other.output_dir / "runs.csv").read_bytes() == (cfg.output_dir / "runs.csv").read_bytes()


def test_exporter_sweep_suffix_and_disabled_writer(tmp_path):
    cfg = small_config(
        tmp_path,
        realizations=2,
        schemes=["mps"],
        channel={"rician_db_list": [0.0, 10.0]},
        writers={"summary": {"enabled": False}},
    )
    files = Exporter(cfg).run_all(run_benchmark(cfg))
    assert {f.name for f in files} == {
        "runs_k+0dB.csv",
        "runs_k+10dB.csv",
        "cdf_mps_k+0dB.csv",
        "cdf_mps_k+10dB.csv",
    }


@pytest.mark.slow
def test_smoothing_minimum_is_at_half(tmp_path):
    cfg = small_config(tmp_path, realizations=500, channel={"rician_db": 0.0, "snr_db": 20.0})
    fractions = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9]
    rows = sweep_smoothing(cfg, fractions)

    assert [row.L for row in rows] == [9, 17, 25, 33, 41, 49, 57, 65, 73]
    medians = [row.median_m for row in rows]
    assert fractions[int(np.argmin(medians))] == 0.5
    assert 0.05 <= rows[4].median_m <= 0.20


@pytest.mark.slow
def test_multi_band_beats_zero_padding(tmp_path):
    cfg = small_config(tmp_path, realizations=200, preset="gap5", schemes=["zero_pad", "mps"])
    report = run_experiment(cfg)
    assert report.metrics["mps"].rmse_m < report.metrics["zero_pad"].rmse_m


@pytest.fixture(scope="module")
def trained_bank() -> NNBank:
    return train_bank(TrainingConfig(max_width=4, n_train=50_000, n_validation=5_000, epochs=20), 0)


@pytest.mark.slow
def test_nn_recovery_tracks_the_reference(tmp_path, trained_bank):
    cfg = small_config(tmp_path, realizations=300, preset="gap1", schemes=["reference", "zero_pad", "nn"])
    metrics = run_experiment(cfg, bank=trained_bank).metrics

    assert metrics["nn"].rmse_m < metrics["zero_pad"].rmse_m
    assert abs(metrics["nn"].rmse_m - metrics["reference"].rmse_m) <= 0.15


@pytest.mark.slow
def test_unscheduled_recovery_is_no_better(tmp_path, trained_bank):
    cfg = small_config(tmp_path, realizations=300, preset="gap5", schemes=["nn", "nn_unscheduled"])
    metrics = run_experiment(cfg, bank=trained_bank).metrics
    assert metrics["nn_unscheduled"].rmse_m >= metrics["nn"].rmse_m
