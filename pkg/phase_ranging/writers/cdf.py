from collections.abc import Sequence
from typing import TYPE_CHECKING

from pydantic import BaseModel, ConfigDict, Field

from .abstract import AbstractWriter, report_suffix

if TYPE_CHECKING:
    from phase_ranging.harness import MetricsReport

__all__ = ("CdfWriter",)


class CdfSettings(BaseModel):
    """Settings for the CDF files."""

    model_config = ConfigDict(title="Writer: CDF Settings")

    enabled: bool = Field(True, description="Write the empirical CDF of the absolute error per mode.")
    prefix: str = Field("cdf_", description="File name prefix; the mode name follows.")


class CdfWriter(AbstractWriter):
    """Two columns per mode: absolute error in meters and its empirical CDF."""

    name = "cdf"
    config = CdfSettings
    writer_config: CdfSettings

    def render(self, reports: Sequence["MetricsReport"]) -> dict[str, str]:
        files = {}
        for report in reports:
            for scheme, metrics in report.metrics.items():
                lines = ["error_m,probability"]
                lines += [f"{e:.17g},{p:.17g}" for e, p in zip(metrics.cdf_errors, metrics.cdf_probs, strict=True)]
                name = f"{self.writer_config.prefix}{scheme}{report_suffix(report, reports)}.csv"
                files[name] = "\n".join(lines) + "\n"
        return files
