import csv
import io
from collections.abc import Sequence
from typing import TYPE_CHECKING

from pydantic import BaseModel, ConfigDict, Field

from .abstract import AbstractWriter, report_suffix

if TYPE_CHECKING:
    from phase_ranging.harness import MetricsReport

__all__ = ("RunsCsvWriter",)

COLUMNS = ("mode", "realization", "truth_m", "estimate_m", "error_m")


def _number(value: float | None) -> str:
    return "" if value is None else format(value, ".17g")


class RunsCsvSettings(BaseModel):
    """Settings for the per-run CSV file."""

    model_config = ConfigDict(title="Writer: Per-Run CSV Settings")

    enabled: bool = Field(True, description="Write one row per realization and mode.")
    name: str = Field("runs", description="File name stem; Rician sweeps append `_k<dB>dB`.")


class RunsCsvWriter(AbstractWriter):
    """One row per realization and mode; failed estimates leave estimate and error empty."""

    name = "csv"
    config = RunsCsvSettings
    writer_config: RunsCsvSettings

    def render(self, reports: Sequence["MetricsReport"]) -> dict[str, str]:
        files = {}
        for report in reports:
            buffer = io.StringIO()
            writer = csv.writer(buffer, lineterminator="\n")
            writer.writerow(COLUMNS)
            for record in report.records:
                writer.writerow(
                    (
                        record.scheme,
                        record.realization,
                        _number(record.truth_m),
                        _number(record.estimate_m),
                        _number(record.error_m),
                    )
                )
            files[f"{self.writer_config.name}{report_suffix(report, reports)}.csv"] = buffer.getvalue()
        return files
