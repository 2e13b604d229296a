import warnings
from pathlib import Path
from typing import Any, Literal, Self, get_args

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from pydantic_settings import SettingsConfigDict

from phase_ranging.constants import GAP_PRESETS, SPEED_OF_LIGHT
from phase_ranging.models import GapMap, SVParams, ToneGrid
from phase_ranging.music import MusicConfig
from phase_ranging.recovery import Recoveries
from phase_ranging.recovery.nn import TrainingConfig
from phase_ranging.sources import TomlSettings
from phase_ranging.writers import AbstractWriter, Writers

__all__ = (
    "Scheme",
    "SCHEMES",
    "ChannelSettings",
    "ExperimentConfig",
)

Scheme = Literal["reference", "zero_pad", "mps", "wps", "anm", "nn", "nn_unscheduled"]
SCHEMES: tuple[str, ...] = get_args(Scheme)


class ChannelSettings(BaseModel):
    """Settings of the simulated channel and link."""

    model_config = ConfigDict(title="Channel Settings")

    distance_m: float = Field(6.0, gt=0, description="Distance between initiator and reflector in meters.")
    ray_rate_inv: float = Field(4e-9, gt=0, description="Mean time between rays (1/lambda) in seconds.")
    rician_db: float = Field(0.0, description="Rician factor in dB.")
    rician_db_list: list[float] = Field(
        default_factory=list,
        description="Rician factors to sweep in dB; `rician_db` alone when empty.",
        examples=[[-5.0, 0.0, 5.0, 10.0, 15.0]],
    )
    rms_delay_spread: float = Field(22e-9, gt=0, description="RMS delay spread in seconds.")
    num_paths_cap: int = Field(64, ge=1, description="Maximum number of paths.")
    horizon_factor: float = Field(10.0, gt=0, description="Rays beyond this many RMS delay spreads are dropped.")
    snr_db: float = Field(20.0, description="Signal-to-noise ratio in dB.")
    interference_snr_db: float = Field(0.0, description="Signal-to-interference ratio on interfered tones in dB.")

    @property
    def tau0(self) -> float:
        return self.distance_m / SPEED_OF_LIGHT

    @property
    def rician_sweep(self) -> list[float]:
        return self.rician_db_list or [self.rician_db]

    def sv_params(self, rician_db: float | None = None) -> SVParams:
        return SVParams(
            tau0=self.tau0,
            ray_rate_inv=self.ray_rate_inv,
            rician_db=self.rician_db if rician_db is None else rician_db,
            rms_delay_spread=self.rms_delay_spread,
            num_paths_cap=self.num_paths_cap,
            horizon_factor=self.horizon_factor,
        )


class ExperimentConfig(TomlSettings):
    """Settings of a ranging experiment."""

    model_config = SettingsConfigDict(
        title="Experiment Settings",
        env_prefix="PHASE_RANGING__",
        env_nested_delimiter="__",
        pyproject_toml_table_header=("tool", "phase_ranging"),
    )

    grid: ToneGrid = Field(default_factory=ToneGrid, description="The tone grid.")
    channel: ChannelSettings = Field(default_factory=ChannelSettings, description="The channel and link.")
    music: MusicConfig = Field(default_factory=MusicConfig, description="The MUSIC estimator.")
    recoveries: Recoveries = Field(default_factory=Recoveries, description="The channel-recovery backends.")
    training: TrainingConfig = Field(default_factory=TrainingConfig, description="The network training protocol.")
    writers: Writers = Field(default_factory=Writers, description="The report writers.")

    realizations: int = Field(500, ge=1, description="Monte-Carlo realizations per mode and Rician factor.")
    seed: int = Field(0, ge=0, description="Root seed; every realization derives its own stream from it.")
    preset: str | None = Field(
        "gap1",
        description="Gap preset `gap1`..`gap6`; ignored when `gaps` is set.",
        examples=["gap1", "gap5"],
    )
    gaps: str | None = Field(
        None,
        description="Explicit gaps such as `0:2,24:26,!29:30`; a leading `!` marks interfered tones.",
    )
    schemes: list[Scheme] = Field(
        default_factory=lambda: ["reference", "zero_pad", "mps", "wps"],
        description="Ranging schemes to evaluate.",
    )
    workers: int = Field(1, ge=1, description="Worker processes for the Monte-Carlo realizations.")
    output_dir: Path = Field(Path("results"), description="Directory for the report files.")

    env_file: Path | None = Field(None, description="The `.env` file to load environment variables from.")

    @property
    def gap_map(self) -> GapMap:
        if self.gaps is not None:
            return GapMap.parse(self.gaps)
        if self.preset is not None:
            return GapMap.from_preset(self.preset)
        return GapMap()

    @property
    def writers_list(self) -> list[type[AbstractWriter]]:
        return list(AbstractWriter.ALL_WRITERS)

    @field_validator("preset")
    @classmethod
    def validate_preset(cls, value: str | None) -> str | None:
        if value is not None and value not in GAP_PRESETS:
            raise ValueError(f"Unknown gap preset {value!r}; expected one of {sorted(GAP_PRESETS)}.")
        return value

    @model_validator(mode="after")
    def validate_gaps(self) -> Self:
        self.gap_map.check_within(self.grid.K)
        if self.realizations < 30:
            warnings.warn(
                f"{self.realizations} realizations give very noisy RMSE and quantile estimates.",
                UserWarning,
                stacklevel=2,
            )
        return self

    @model_validator(mode="before")
    @classmethod
    def validate_env_file(cls, data: Any) -> Any:
        """Load the env file before the other fields are read."""
        if isinstance(data, dict):
            file = data.get("env_file")
            if file is not None and Path(file).is_file():
                load_dotenv(file)
        return data

    @classmethod
    def from_file(cls, config_file: Path | None = None, **values: Any) -> Self:
        """Settings with `config_file` as the TOML source below init values and above the environment.

        :param config_file: A TOML file; `pyproject.toml` is read from `[tool.phase_ranging]`.
        :param values: Values that override every source.
        :return: The settings.
        """
        if config_file is None:
            return cls(**values)
        settings_cls = type(cls.__name__, (cls,), {"model_config": {**cls.model_config, "toml_file": config_file}})
        return settings_cls(**values)
