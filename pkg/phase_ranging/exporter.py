from collections.abc import Sequence
from pathlib import Path

from phase_ranging.harness import MetricsReport
from phase_ranging.settings import ExperimentConfig
from phase_ranging.writers import AbstractWriter

__all__ = ("Exporter",)


class Exporter:
    """Writes experiment reports with every enabled writer."""

    def __init__(
        self,
        settings: ExperimentConfig | None = None,
        writers: list[type[AbstractWriter]] | None = None,
    ) -> None:
        self.settings: ExperimentConfig = settings or ExperimentConfig()
        self.writers: list[type[AbstractWriter]] = self.settings.writers_list if writers is None else writers

    def run_all(self, reports: Sequence[MetricsReport]) -> list[Path]:
        """Run all writers for the given reports.

        :param reports: The reports, one per Rician factor.
        :return: The paths of the files written; unchanged files are skipped.
        """
        return [
            # Run all writers for the reports
            path
            for writer in self.writers
            for path in writer.run(self.settings, reports)
        ]
