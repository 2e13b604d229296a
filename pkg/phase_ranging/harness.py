"""Monte-Carlo ranging experiments, error metrics and capture-file processing."""

import logging
import math
from collections.abc import Sequence
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, SkipValidation

from phase_ranging.capture_io import read_capture
from phase_ranging.channel import apply_gap_map, sample_sv_channel, synthesize_iq
from phase_ranging.constants import SPEED_OF_LIGHT
from phase_ranging.exceptions import RangingError
from phase_ranging.models import GapMap, RangeEstimate, ToneGap, ToneGrid, TwoWayResponse
from phase_ranging.music import MusicConfig, estimate_range, estimate_response
from phase_ranging.reconstruct import find_bands, two_way
from phase_ranging.recovery import AbstractRecovery, AnmConfig, AnmRecovery, NNBank, NNConfig, NNRecovery
from phase_ranging.settings import ChannelSettings, ExperimentConfig, Scheme

__all__ = (
    "ErrorRecord",
    "SchemeMetrics",
    "MetricsReport",
    "SmoothingRow",
    "RunPlan",
    "compute_metrics",
    "realization_seeds",
    "run_realization",
    "run_plan",
    "run_experiment",
    "run_benchmark",
    "sweep_smoothing",
    "gaps_from_capture",
    "process_capture_file",
)

logger = logging.getLogger(__name__)

CaptureMode = Literal["full", "zero_pad", "mps", "wps", "anm", "nn"]


class ErrorRecord(BaseModel):
    """Outcome of one scheme on one realization."""

    scheme: str
    realization: int
    truth_m: float
    estimate_m: float | None = None
    error_m: float | None = Field(None, description="Signed error, estimate minus truth.")
    failure: str | None = Field(None, description="Why no estimate was produced.")


class SchemeMetrics(BaseModel):
    """Error statistics of one scheme."""

    scheme: str
    count: int = Field(..., description="Successful estimates.")
    failures: int = Field(..., description="Realizations without an estimate.")
    rmse_m: float
    median_m: float = Field(..., description="Median absolute error.")
    q90_m: float = Field(..., description="Width of the interval between the 5% and 95% quantiles of the signed error.")
    bias_m: float = Field(..., description="Median signed error.")
    cdf_errors: list[float] = Field(default_factory=list, description="Sorted absolute errors.")
    cdf_probs: list[float] = Field(default_factory=list, description="Empirical CDF at `cdf_errors`.")


class MetricsReport(BaseModel):
    """Metrics of every scheme at one Rician factor, with the per-realization records."""

    rician_db: float
    gaps: str
    realizations: int
    metrics: dict[str, SchemeMetrics] = Field(default_factory=dict)
    records: list[ErrorRecord] = Field(default_factory=list)


class SmoothingRow(BaseModel):
    """One line of a smoothing-factor sweep."""

    F: float
    L: int
    median_m: float
    rmse_m: float
    failures: int


class RunPlan(BaseModel):
    """Everything a worker process needs to simulate realizations."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    grid: ToneGrid
    channel: ChannelSettings
    music: MusicConfig
    gap_map: GapMap
    schemes: list[Scheme]
    seed: int
    rician_db: float
    anm: AnmConfig = Field(default_factory=AnmConfig)
    nn: NNConfig = Field(default_factory=NNConfig)
    bank: SkipValidation[NNBank | None] = None

    @classmethod
    def from_config(cls, cfg: ExperimentConfig, rician_db: float, bank: NNBank | None = None) -> "RunPlan":
        return cls(
            grid=cfg.grid,
            channel=cfg.channel,
            music=cfg.music,
            gap_map=cfg.gap_map,
            schemes=cfg.schemes,
            seed=cfg.seed,
            rician_db=rician_db,
            anm=cfg.recoveries.anm,
            nn=cfg.recoveries.nn,
            bank=bank,
        )

    def recoveries(self) -> dict[str, AbstractRecovery]:
        result: dict[str, AbstractRecovery] = {}
        if "anm" in self.schemes:
            result["anm"] = AnmRecovery(self.anm)
        if "nn" in self.schemes:
            result["nn"] = NNRecovery(self.nn, bank=self.bank)
        if "nn_unscheduled" in self.schemes:
            result["nn_unscheduled"] = NNRecovery(self.nn.model_copy(update={"schedule": False}), bank=self.bank)
        return result


def compute_metrics(scheme: str, errors: Sequence[float], failures: int = 0) -> SchemeMetrics:
    """RMSE, median absolute error, Q90 width, bias and CDF of signed errors.

    :param scheme: The scheme name.
    :param errors: Signed errors of the successful estimates.
    :param failures: Number of realizations without an estimate.
    :return: The metrics; NaN statistics when there is no successful estimate.
    """
    e = np.sort(np.asarray(errors, dtype=np.float64))
    if e.size == 0:
        return SchemeMetrics(
            scheme=scheme,
            count=0,
            failures=failures,
            rmse_m=math.nan,
            median_m=math.nan,
            q90_m=math.nan,
            bias_m=math.nan,
        )
    magnitude = np.sort(np.abs(e))
    q05, q95 = np.quantile(e, [0.05, 0.95])
    return SchemeMetrics(
        scheme=scheme,
        count=int(e.size),
        failures=failures,
        rmse_m=float(np.sqrt(np.mean(e**2))),
        median_m=float(np.median(magnitude)),
        q90_m=float(q95 - q05),
        bias_m=float(np.median(e)),
        cdf_errors=magnitude.tolist(),
        cdf_probs=(np.arange(1, e.size + 1) / e.size).tolist(),
    )


def realization_seeds(seed: int, index: int, count: int = 3) -> list[int]:
    """Independent seeds for one realization, derived from the root seed and the realization index."""
    return [int(s) for s in np.random.SeedSequence([seed, index]).generate_state(count)]


def _estimate(
    scheme: str,
    clean: TwoWayResponse,
    gapped: TwoWayResponse,
    gap_map: GapMap,
    music: MusicConfig,
    recoveries: dict[str, AbstractRecovery],
) -> RangeEstimate:
    if scheme == "reference":
        return estimate_response(clean, "full", music)
    if scheme in ("zero_pad", "mps", "wps"):
        return estimate_response(gapped, scheme, music)  # type: ignore[arg-type]
    recovered = recoveries[scheme].recover(gapped, gap_map)
    return estimate_response(recovered, "zero_pad", music)


def run_realization(
    plan: RunPlan,
    index: int,
    recoveries: dict[str, AbstractRecovery] | None = None,
) -> list[ErrorRecord]:
    """Simulate one realization and estimate the distance with every scheme."""
    if recoveries is None:
        recoveries = plan.recoveries()
    channel_seed, iq_seed, gap_seed = realization_seeds(plan.seed, index)

    channel = sample_sv_channel(plan.channel.sv_params(plan.rician_db), channel_seed)
    truth = SPEED_OF_LIGHT * float(channel.delays[0])
    capture = synthesize_iq(channel, plan.grid, plan.channel.snr_db, iq_seed)
    gapped = apply_gap_map(capture, plan.gap_map, plan.channel.interference_snr_db, gap_seed)
    clean, degraded = two_way(capture), two_way(gapped)

    records = []
    for scheme in plan.schemes:
        try:
            estimate = _estimate(scheme, clean, degraded, plan.gap_map, plan.music, recoveries)
        except RangingError as e:
            logger.debug("Realization %d, %s: %s", index, scheme, e)
            records.append(ErrorRecord(scheme=scheme, realization=index, truth_m=truth, failure=str(e)))
            continue
        records.append(
            ErrorRecord(
                scheme=scheme,
                realization=index,
                truth_m=truth,
                estimate_m=estimate.distance_m,
                error_m=estimate.distance_m - truth,
            )
        )
    return records


def _run_chunk(job: tuple[RunPlan, list[int]]) -> list[ErrorRecord]:
    plan, indices = job
    recoveries = plan.recoveries()
    return [record for index in indices for record in run_realization(plan, index, recoveries)]


def run_plan(plan: RunPlan, realizations: int, workers: int = 1) -> MetricsReport:
    """Run `realizations` realizations of a plan and aggregate per scheme.

    :param plan: The simulation plan.
    :param realizations: The number of realizations.
    :param workers: Processes; the report does not depend on it.
    :return: The report.
    """
    indices = list(range(realizations))
    if workers > 1:
        chunks = [indices[i::workers] for i in range(workers)]
        with ProcessPoolExecutor(max_workers=workers) as executor:
            records = [r for chunk in executor.map(_run_chunk, [(plan, c) for c in chunks]) for r in chunk]
    else:
        records = _run_chunk((plan, indices))

    order = {scheme: i for i, scheme in enumerate(plan.schemes)}
    records.sort(key=lambda r: (order[r.scheme], r.realization))

    metrics = {}
    for scheme in plan.schemes:
        rows = [r for r in records if r.scheme == scheme]
        errors = [r.error_m for r in rows if r.error_m is not None]
        metrics[scheme] = compute_metrics(scheme, errors, failures=len(rows) - len(errors))
        logger.info(
            "Rician %g dB, %s: RMSE %.3f m over %d estimates, %d failures",
            plan.rician_db,
            scheme,
            metrics[scheme].rmse_m,
            metrics[scheme].count,
            metrics[scheme].failures,
        )
    return MetricsReport(
        rician_db=plan.rician_db,
        gaps=str(plan.gap_map),
        realizations=realizations,
        metrics=metrics,
        records=records,
    )


def _load_bank(cfg: ExperimentConfig, bank: NNBank | None) -> NNBank | None:
    if bank is not None or not {"nn", "nn_unscheduled"} & set(cfg.schemes):
        return bank
    return NNRecovery(cfg.recoveries.nn).bank


def run_experiment(cfg: ExperimentConfig, bank: NNBank | None = None, rician_db: float | None = None) -> MetricsReport:
    """Run the configured experiment at one Rician factor.

    :param cfg: The experiment settings.
    :param bank: A network bank; loaded from `recoveries.nn.bank_path` when a network scheme needs it.
    :param rician_db: The Rician factor; `channel.rician_db` by default.
    :raise FileNotFoundError: If a network scheme is requested and no bank is available.
    :return: The report.
    """
    rician = cfg.channel.rician_db if rician_db is None else rician_db
    plan = RunPlan.from_config(cfg, rician, _load_bank(cfg, bank))
    return run_plan(plan, cfg.realizations, cfg.workers)


def run_benchmark(cfg: ExperimentConfig, bank: NNBank | None = None) -> list[MetricsReport]:
    """Run the experiment for every Rician factor of the sweep."""
    bank = _load_bank(cfg, bank)
    return [run_experiment(cfg, bank, rician) for rician in cfg.channel.rician_sweep]


def sweep_smoothing(cfg: ExperimentConfig, f_list: Sequence[float]) -> list[SmoothingRow]:
    """Reference-scheme errors without gaps for L = floor(F * K) + 1.

    :param cfg: The experiment settings; gaps and schemes are ignored.
    :param f_list: Fractions F in (0, 1).
    :raise ValueError: If a fraction lies outside (0, 1).
    :return: One row per fraction.
    """
    rows = []
    for f in f_list:
        if not 0 < f < 1:
            raise ValueError(f"Smoothing fraction must lie in (0, 1), got {f}.")
        smoothing = math.floor(f * cfg.grid.K) + 1
        plan = RunPlan(
            grid=cfg.grid,
            channel=cfg.channel,
            music=cfg.music.model_copy(update={"smoothing_factor": smoothing}),
            gap_map=GapMap(),
            schemes=["reference"],
            seed=cfg.seed,
            rician_db=cfg.channel.rician_db,
        )
        metrics = run_plan(plan, cfg.realizations, cfg.workers).metrics["reference"]
        rows.append(
            SmoothingRow(F=f, L=smoothing, median_m=metrics.median_m, rmse_m=metrics.rmse_m, failures=metrics.failures)
        )
    return rows


def gaps_from_capture(resp: TwoWayResponse, interfered: np.ndarray | None = None) -> GapMap:
    """Gap map of the unavailable runs of a response; a run with any interfered tone is interfered."""
    gaps = []
    for run in find_bands(~resp.available):
        kind = "interfered" if interfered is not None and interfered[run.index_slice].any() else "missing"
        gaps.append(ToneGap(first=run.a, last=run.b, kind=kind))
    return GapMap(gaps=gaps)


def process_capture_file(
    path: Path,
    mode: CaptureMode = "mps",
    bank_path: Path | None = None,
    music: MusicConfig | None = None,
    **recovery: Any,
) -> RangeEstimate:
    """Estimate the distance from an IQ-capture file.

    :param path: The capture file.
    :param mode: An estimator mode, or `anm` / `nn` to recover the gaps first.
    :param bank_path: The network bank for `nn`.
    :param music: The estimator settings.
    :param recovery: Settings of the recovery backend.
    :raise CaptureFormatError: If the file does not parse.
    :raise NoDataError: If no tone is available.
    :return: The estimate.
    """
    capture = read_capture(path)
    if mode not in ("anm", "nn"):
        return estimate_range(capture, mode, music)

    resp = two_way(capture)
    gaps = gaps_from_capture(resp, capture.interfered)
    if mode == "anm":
        backend: AbstractRecovery = AnmRecovery(AnmConfig(**recovery))
    else:
        backend = NNRecovery(NNConfig(bank_path=bank_path, **recovery))
    return estimate_response(backend.recover(resp, gaps), "zero_pad", music)
