from pathlib import Path

from pydantic_settings import BaseSettings
from pydantic_settings.sources import (
    PydanticBaseSettingsSource,
    PyprojectTomlConfigSettingsSource,
    TomlConfigSettingsSource,
)

__all__ = ("TomlSettings", "config_file_source")


def config_file_source(settings_cls: type[BaseSettings]) -> PydanticBaseSettingsSource | None:
    """The TOML source for `model_config["toml_file"]`, or None when no such file exists.

    A file named `pyproject.toml` is read from the table in `pyproject_toml_table_header`,
    any other file from its top level.
    """
    configured = settings_cls.model_config.get("toml_file")
    if not configured:
        return None
    path = Path(configured if isinstance(configured, str | Path) else next(iter(configured)))
    if not path.is_file():
        return None
    if path.name == "pyproject.toml":
        return PyprojectTomlConfigSettingsSource(settings_cls, toml_file=path)
    return TomlConfigSettingsSource(settings_cls, toml_file=path)


class TomlSettings(BaseSettings):
    """Settings read from init kwargs, then a TOML file, then the environment."""

    @classmethod
    def settings_customise_sources(
        cls,
        settings_cls: type[BaseSettings],
        init_settings: PydanticBaseSettingsSource,
        env_settings: PydanticBaseSettingsSource,
        dotenv_settings: PydanticBaseSettingsSource,
        file_secret_settings: PydanticBaseSettingsSource,
    ) -> tuple[PydanticBaseSettingsSource, ...]:
        """Put the TOML config file between the init kwargs and the environment."""
        file_source = config_file_source(settings_cls)
        file_sources = (file_source,) if file_source is not None else ()
        return init_settings, *file_sources, env_settings, dotenv_settings, file_secret_settings
