import argparse
import logging
import os
from collections.abc import Callable, Sequence
from pathlib import Path
from typing import Any

import numpy as np
from dotenv import dotenv_values
from pydantic import ValidationError

from phase_ranging.capture_io import read_capture, write_capture
from phase_ranging.channel import apply_gap_map, sample_sv_channel, synthesize_iq
from phase_ranging.constants import GAP_PRESETS, SPEED_OF_LIGHT
from phase_ranging.exceptions import RangingError
from phase_ranging.exporter import Exporter
from phase_ranging.harness import (
    gaps_from_capture,
    process_capture_file,
    realization_seeds,
    run_benchmark,
    sweep_smoothing,
)
from phase_ranging.music import estimate_response
from phase_ranging.reconstruct import two_way
from phase_ranging.recovery import AnmRecovery, NNRecovery, bank_param_count, save_bank, train_bank
from phase_ranging.scheduler import schedule_gaps
from phase_ranging.settings import SCHEMES, ExperimentConfig
from phase_ranging.utils import (
    CommaListAction,
    describe_validation_error,
    make_pretty_md_table,
    make_pretty_md_table_from_dict,
)
from phase_ranging.version import __version__

logger = logging.getLogger(__name__)

CAPTURE_MODES = ("full", "zero_pad", "mps", "wps", "anm", "nn")


def file_type(path: str) -> Path:
    """Check if the path is a file."""
    p = Path(path).resolve().absolute()
    if p.is_file():
        return p
    raise argparse.ArgumentTypeError(f"The {path} is not a file.")


def fractions_type(value: str) -> list[float]:
    """Parse comma-separated fractions in (0, 1)."""
    try:
        result = [float(v) for v in value.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"The {value!r} is not a list of numbers.") from None
    if not result or any(not 0 < f < 1 for f in result):
        raise argparse.ArgumentTypeError(f"Fractions must lie in (0, 1), got {value!r}.")
    return result


common = argparse.ArgumentParser(add_help=False)
common.add_argument(
    "--config",
    "-c",
    default=None,
    type=file_type,
    help="TOML config file; `pyproject.toml` is read from [tool.phase_ranging]. (default: None)",
)
common.add_argument(
    "--env-file",
    "-e",
    default=None,
    type=argparse.FileType("r"),
    help="Use the .env file to load environment variables. (default: None)",
)
common.add_argument(
    "--verbose",
    "-V",
    action="count",
    default=0,
    help="Log more; repeat for debug output.",
)
common.add_argument("--seed", type=int, default=None, help="Root seed.")
common.add_argument(
    "--preset",
    choices=sorted(GAP_PRESETS),
    default=None,
    help="Gap preset; replaces configured gaps unless --gaps is given.",
)
common.add_argument("--gaps", default=None, help="Explicit gaps, e.g. `0:2,24:26,!29:30`.")
common.add_argument("--out", type=Path, default=None, help="Output directory.")
common.add_argument("--realizations", type=int, default=None, help="Monte-Carlo realizations.")
common.add_argument("--bank", type=Path, default=None, help="Model-bank file.")

parser = argparse.ArgumentParser(
    prog="phase-ranging",
    description="Phase-based narrowband ranging with missing or interfered tones",
)
parser.add_argument(
    "--version",
    "-v",
    action="version",
    version=f"phase-ranging {__version__}",
)
subparsers = parser.add_subparsers(dest="command", required=True)

simulate_parser = subparsers.add_parser("simulate", parents=[common], help="Write a simulated IQ capture.")
simulate_parser.add_argument("--index", type=int, default=0, help="Realization index. (default: 0)")
simulate_parser.add_argument(
    "--output",
    "-o",
    type=Path,
    default=None,
    help="Capture file. (default: <out>/capture.txt)",
)

estimate_parser = subparsers.add_parser("estimate", parents=[common], help="Estimate the distance of a capture file.")
estimate_parser.add_argument("capture", type=file_type, help="IQ-capture file.")
estimate_parser.add_argument("--mode", choices=CAPTURE_MODES, default="mps", help="Estimator. (default: mps)")

train_parser = subparsers.add_parser("train-nn", parents=[common], help="Train and save a network bank.")
train_parser.add_argument("--workers", type=int, default=1, help="Training processes. (default: 1)")

schedule_parser = subparsers.add_parser("schedule", parents=[common], help="Print the gap recovery order.")

recover_parser = subparsers.add_parser("recover", parents=[common], help="Recover the gaps of a capture file.")
recover_parser.add_argument("capture", type=file_type, help="IQ-capture file.")
recover_parser.add_argument("--backend", choices=("anm", "nn"), default="anm", help="Recovery. (default: anm)")

benchmark_parser = subparsers.add_parser("benchmark", parents=[common], help="Run the Monte-Carlo benchmark.")
benchmark_parser.add_argument(
    "--mode",
    action=CommaListAction,
    allowed=SCHEMES,
    default=None,
    help=f"Comma-separated schemes out of {', '.join(SCHEMES)}.",
)

sweep_parser = subparsers.add_parser("sweep-smoothing", parents=[common], help="Sweep the smoothing factor.")
sweep_parser.add_argument(
    "--fractions",
    type=fractions_type,
    default=[0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9],
    help="Comma-separated fractions F; L = floor(F * K) + 1. (default: 0.1,...,0.9)",
)


def load_config(args: argparse.Namespace) -> ExperimentConfig:
    """Settings from the config file, the environment and the command-line overrides."""
    values: dict[str, Any] = {}
    if args.seed is not None:
        values["seed"] = args.seed
    if args.gaps is not None:
        values["gaps"] = args.gaps
    if args.preset is not None:
        values["preset"] = args.preset
    if args.out is not None:
        values["output_dir"] = args.out
    if args.realizations is not None:
        values["realizations"] = args.realizations
    if args.bank is not None:
        values["recoveries"] = {"nn": {"bank_path": args.bank}}
    if getattr(args, "mode", None) and args.command == "benchmark":
        values["schemes"] = args.mode
    cfg = ExperimentConfig.from_file(args.config, **values)
    if args.preset is not None and args.gaps is None and cfg.gaps is not None:
        logger.warning("--preset %s replaces the configured gaps %r", args.preset, cfg.gaps)
        cfg = ExperimentConfig.from_file(args.config, **values, gaps=None)
    return cfg


def simulate(args: argparse.Namespace, cfg: ExperimentConfig) -> str:
    channel_seed, iq_seed, gap_seed = realization_seeds(cfg.seed, args.index)
    channel = sample_sv_channel(cfg.channel.sv_params(), channel_seed)
    capture = synthesize_iq(channel, cfg.grid, cfg.channel.snr_db, iq_seed)
    capture = apply_gap_map(capture, cfg.gap_map, cfg.channel.interference_snr_db, gap_seed)

    output = args.output or Path(cfg.output_dir) / "capture.txt"
    output.parent.mkdir(parents=True, exist_ok=True)
    write_capture(capture, output)
    return f"Wrote {output} (true distance {SPEED_OF_LIGHT * channel.delays[0]:.4f} m, {channel.M} paths).\n"


def estimate(args: argparse.Namespace, cfg: ExperimentConfig) -> str:
    recovery: dict[str, Any] = {}
    if args.mode == "anm":
        recovery = cfg.recoveries.anm.model_dump()
    elif args.mode == "nn":
        recovery = cfg.recoveries.nn.model_dump(exclude={"bank_path"})
    result = process_capture_file(args.capture, args.mode, cfg.recoveries.nn.bank_path, cfg.music, **recovery)
    d = result.diagnostics
    bands = ", ".join(f"{b.a}:{b.b} (L={L})" for b, L in zip(d.bands, d.smoothing_factors, strict=True))
    return f"Distance: {result.distance_m:.4f} m (tau0 {result.tau0_hat * 1e9:.2f} ns)\nBands: {bands}\n"


def train(args: argparse.Namespace, cfg: ExperimentConfig) -> str:
    path = cfg.recoveries.nn.bank_path
    if path is None:
        raise FileNotFoundError("Pass --bank or set recoveries.nn.bank_path to choose the output file.")
    bank = train_bank(cfg.training, cfg.seed, cfg.grid, workers=args.workers)
    save_bank(bank, path, cfg.training.precision)
    interior = bank_param_count(bank.max_width, bank.hidden)
    return (
        f"Wrote {path}: {len(bank.models)} models, "
        f"{bank.param_count()} reals ({interior} for the interior models).\n"
    )


def schedule(args: argparse.Namespace, cfg: ExperimentConfig) -> str:
    gap_map = cfg.gap_map
    result = schedule_gaps(gap_map, ~gap_map.mask(cfg.grid.K))
    rows = [
        [str(i + 1), str(gap), str(gap.width), "yes" if complete else "zero-padded"]
        for i, (gap, complete) in enumerate(zip(result.order, result.inputs_complete, strict=True))
    ]
    return make_pretty_md_table(["#", "Gap", "Width", "Inputs"], rows) + "\n"


def recover(args: argparse.Namespace, cfg: ExperimentConfig) -> str:
    capture = read_capture(args.capture)
    resp = two_way(capture)
    gaps = gaps_from_capture(resp, capture.interfered)
    backend = AnmRecovery(cfg.recoveries.anm) if args.backend == "anm" else NNRecovery(cfg.recoveries.nn)
    recovered = backend.recover(resp, gaps)

    filled = np.flatnonzero(recovered.available & ~resp.available)
    rows = [[str(k), f"{recovered.h_sq[k].real:.6g}", f"{recovered.h_sq[k].imag:.6g}"] for k in filled]
    result = estimate_response(recovered, "zero_pad", cfg.music)
    return (
        make_pretty_md_table(["Tone", "Re h^2", "Im h^2"], rows)
        + f"\n\nDistance after recovery: {result.distance_m:.4f} m\n"
    )


def benchmark(args: argparse.Namespace, cfg: ExperimentConfig) -> str:
    reports = run_benchmark(cfg)
    files = Exporter(cfg).run_all(reports)
    written = "\n".join(f"- {f}" for f in files)
    return f"Generated files ({len(files)}): \n{written}\n" if files else "No files generated.\n"


def smoothing(args: argparse.Namespace, cfg: ExperimentConfig) -> str:
    rows = sweep_smoothing(cfg, args.fractions)
    table = make_pretty_md_table_from_dict(
        [
            {
                "F": f"{r.F:g}",
                "L": str(r.L),
                "Median (m)": f"{r.median_m:.4f}",
                "RMSE (m)": f"{r.rmse_m:.4f}",
                "Failures": str(r.failures),
            }
            for r in rows
        ]
    )
    output = Path(cfg.output_dir)
    output.mkdir(parents=True, exist_ok=True)
    (output / "smoothing_sweep.md").write_text(table + "\n")
    return table + "\n"


COMMANDS: dict[str, Callable[[argparse.Namespace, ExperimentConfig], str]] = {
    "simulate": simulate,
    "estimate": estimate,
    "train-nn": train,
    "schedule": schedule,
    "recover": recover,
    "benchmark": benchmark,
    "sweep-smoothing": smoothing,
}


def main(parse_args: Sequence[str] | None = None):  # noqa: D103
    args: argparse.Namespace = parser.parse_args(parse_args)
    logging.basicConfig(
        level=max(logging.WARNING - 10 * args.verbose, logging.DEBUG),
        format="%(levelname)s %(name)s: %(message)s",
    )
    if args.env_file:
        os.environ.update({k: v for k, v in dotenv_values(stream=args.env_file).items() if v is not None})

    try:
        cfg = load_config(args)
        message = COMMANDS[args.command](args, cfg)
    except ValidationError as e:
        parser.exit(2, f"{parser.prog}: error: {describe_validation_error(e)}\n")
    except (RangingError, FileNotFoundError, ValueError) as e:
        parser.exit(2, f"{parser.prog}: error: {e}\n")
    parser.exit(0, message)


if __name__ == "__main__":
    main()
