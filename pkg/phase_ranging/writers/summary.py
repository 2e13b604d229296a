from collections.abc import Sequence
from typing import TYPE_CHECKING

from pydantic import BaseModel, ConfigDict, Field

from phase_ranging.utils import format_meters, make_pretty_md_table

from .abstract import AbstractWriter

if TYPE_CHECKING:
    from phase_ranging.harness import MetricsReport

__all__ = ("SummaryWriter",)

HEADER = ["Rician (dB)", "Mode", "RMSE (m)", "Median (m)", "Q90 (m)", "Bias (m)", "Failures"]


class SummarySettings(BaseModel):
    """Settings for the summary table."""

    model_config = ConfigDict(title="Writer: Summary Table Settings")

    enabled: bool = Field(True, description="Write the Markdown summary table.")
    name: str = Field("summary.md", description="The name of the summary file.")


class SummaryWriter(AbstractWriter):
    """Markdown table of the metrics of every mode and Rician factor."""

    name = "summary"
    config = SummarySettings
    writer_config: SummarySettings

    def render(self, reports: Sequence["MetricsReport"]) -> dict[str, str]:
        rows = [
            [
                f"{report.rician_db:g}",
                scheme,
                format_meters(m.rmse_m),
                format_meters(m.median_m),
                format_meters(m.q90_m),
                format_meters(m.bias_m),
                f"{m.failures}/{m.failures + m.count}",
            ]
            for report in reports
            for scheme, m in report.metrics.items()
        ]
        title = ""
        if reports:
            first = reports[0]
            title = f"# Ranging errors\n\nGaps: `{first.gaps or 'none'}`, {first.realizations} realizations.\n\n"
        return {self.writer_config.name: title + make_pretty_md_table(HEADER, rows) + "\n"}
