from abc import ABC, abstractmethod
from collections.abc import Sequence
from pathlib import Path
from typing import TYPE_CHECKING, Any, ClassVar, TypeAlias, final

from pydantic import BaseModel, Field, create_model

if TYPE_CHECKING:
    from phase_ranging.harness import MetricsReport
    from phase_ranging.settings import ExperimentConfig

else:
    MetricsReport: TypeAlias = BaseModel
    ExperimentConfig: TypeAlias = BaseModel


__all__ = (
    "AbstractWriter",
    "report_suffix",
)


def report_suffix(report: MetricsReport, reports: Sequence[MetricsReport]) -> str:
    """File-name suffix that tells the reports of a Rician sweep apart; empty for a single report."""
    if len(reports) <= 1:
        return ""
    return f"_k{report.rician_db:+g}dB"


class AbstractWriter(ABC):
    """The abstract class for a report writer."""

    config: ClassVar[type[BaseModel]]
    name: ClassVar[str]

    ALL_WRITERS: ClassVar[list[type["AbstractWriter"]]] = []

    def __init__(self, settings: ExperimentConfig) -> None:
        """Initialize the writer.

        :param settings: The experiment settings.
        """
        self.settings = settings
        self.writer_config = getattr(settings.writers, self.name)

    def __init_subclass__(cls, **kwargs: Any) -> None:
        """Register the subclass."""
        super().__init_subclass__(**kwargs)
        if not getattr(cls, "name", None):
            raise ValueError("Writer must have a name")
        if not getattr(cls, "config", None) or not isinstance(cls.config, type):
            raise ValueError("Writer must have a config")
        if cls.name in {w.name for w in AbstractWriter.ALL_WRITERS}:
            raise ValueError(f"Writer {cls.name} already exists")

        AbstractWriter.ALL_WRITERS.append(cls)

    @abstractmethod
    def render(self, reports: Sequence[MetricsReport]) -> dict[str, str]:
        """Render the reports.

        :param reports: The reports, one per Rician factor.
        :return: File content keyed by file name.
        """
        raise NotImplementedError

    @classmethod
    def run(cls, settings: ExperimentConfig, reports: Sequence[MetricsReport]) -> list[Path]:
        """Run the writer.

        :param settings: The experiment settings.
        :param reports: The reports to write.
        :return: The list of file paths written to.
        """
        writer = cls(settings)
        if not writer.writer_config.enabled:
            return []

        output_dir = Path(settings.output_dir)
        output_dir.mkdir(parents=True, exist_ok=True)
        updated_files: list[Path] = []
        for name, content in writer.render(reports).items():
            path = output_dir / name
            if path.is_file() and path.read_text() == content:
                # No need to update the file
                continue

            path.write_text(content)
            updated_files.append(path)
        return updated_files

    @staticmethod
    @final
    def create_writer_config_model() -> type[BaseModel]:
        """Create the writers config model.

        The attribute is the writer name, the value is writer config.
        :return: The writers model.
        """
        return create_model(
            "Writers",
            **{
                writer.name: (writer.config, Field(default_factory=writer.config))
                for writer in AbstractWriter.ALL_WRITERS
            },
            __base__=BaseModel,
            __doc__="The configuration of report writers.",
        )
