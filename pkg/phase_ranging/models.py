from collections.abc import Iterable
from typing import Literal, Self

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from phase_ranging.constants import GAP_PRESETS, MISSING_TONES, SPEED_OF_LIGHT, BoolArray, ComplexArray, RealArray

__all__ = (
    "ArrayModel",
    "ToneGrid",
    "SVParams",
    "ChannelRealization",
    "GapKind",
    "ToneGap",
    "GapMap",
    "IQCapture",
    "TwoWayResponse",
    "ToneBand",
    "ReconstructedChannel",
    "EstimateDiagnostics",
    "RangeEstimate",
)

GapKind = Literal["missing", "interfered"]


class ArrayModel(BaseModel):
    """Base for models that carry numpy arrays."""

    model_config = ConfigDict(arbitrary_types_allowed=True)


class ToneGrid(BaseModel):
    """Uniform frequency grid: tone k sits at f0 + k * delta_f for k in 0..K-1."""

    model_config = ConfigDict(title="Tone Grid", frozen=True)

    f0: float = Field(2.401e9, gt=0, description="Frequency of tone 0 in Hz.")
    delta_f: float = Field(1e6, gt=0, description="Tone spacing in Hz.")
    K: int = Field(80, ge=2, description="Number of tones.")

    @property
    def omega0(self) -> float:
        return 2 * np.pi * self.f0

    @property
    def delta_omega(self) -> float:
        return 2 * np.pi * self.delta_f

    @property
    def frequencies(self) -> np.ndarray:
        return self.f0 + np.arange(self.K) * self.delta_f


class SVParams(BaseModel):
    """Parameters of the single-cluster Saleh-Valenzuela channel."""

    model_config = ConfigDict(title="Saleh-Valenzuela Parameters")

    tau0: float = Field(6.0 / SPEED_OF_LIGHT, gt=0, description="Line-of-sight delay in seconds.")
    ray_rate_inv: float = Field(4e-9, gt=0, description="Mean time between consecutive rays (1/lambda) in seconds.")
    rician_db: float = Field(0.0, description="Power ratio of the LoS path to all other paths, in dB.")
    rms_delay_spread: float = Field(22e-9, gt=0, description="RMS delay spread of the non-LoS profile in seconds.")
    num_paths_cap: int = Field(64, ge=1, description="Maximum number of paths including the LoS path.")
    horizon_factor: float = Field(
        10.0,
        gt=0,
        description="Rays later than tau0 + horizon_factor * rms_delay_spread are not generated.",
    )

    @property
    def horizon(self) -> float:
        return self.horizon_factor * self.rms_delay_spread


class ChannelRealization(ArrayModel):
    """Path amplitudes and ascending delays of one multipath channel."""

    amplitudes: ComplexArray
    delays: RealArray

    @property
    def M(self) -> int:  # noqa: N802
        return int(self.amplitudes.size)

    @property
    def signal_power(self) -> float:
        """Mean path power, (1/M) * sum |a_m|^2."""
        return float(np.mean(np.abs(self.amplitudes) ** 2))

    @model_validator(mode="after")
    def validate_paths(self) -> Self:
        if self.amplitudes.ndim != 1 or self.amplitudes.shape != self.delays.shape:
            raise ValueError("Amplitudes and delays must be vectors of the same length.")
        if self.amplitudes.size == 0:
            raise ValueError("A channel needs at least one path.")
        if np.any(np.diff(self.delays) <= 0):
            raise ValueError("Path delays must be strictly ascending.")
        return self


class ToneGap(BaseModel):
    """Contiguous block of tones [first, last] that is missing or interfered."""

    model_config = ConfigDict(frozen=True)

    first: int = Field(..., ge=0, description="First tone index of the block.")
    last: int = Field(..., ge=0, description="Last tone index of the block (inclusive).")
    kind: GapKind = Field("missing", description="Whether the tones are missing or interfered.")

    @property
    def width(self) -> int:
        return self.last - self.first + 1

    @property
    def indices(self) -> np.ndarray:
        return np.arange(self.first, self.last + 1)

    def __str__(self) -> str:
        span = str(self.first) if self.width == 1 else f"{self.first}:{self.last}"
        return f"!{span}" if self.kind == "interfered" else span

    @model_validator(mode="after")
    def validate_order(self) -> Self:
        if self.first > self.last:
            raise ValueError(f"Gap first index {self.first} is after its last index {self.last}.")
        return self


class GapMap(BaseModel):
    """Disjoint tone gaps sorted by their first index."""

    gaps: list[ToneGap] = Field(default_factory=list, description="The tone gaps.")

    def __len__(self) -> int:
        return len(self.gaps)

    def __str__(self) -> str:
        return ",".join(str(gap) for gap in self.gaps)

    @model_validator(mode="after")
    def validate_disjoint(self) -> Self:
        self.gaps.sort(key=lambda g: g.first)
        for left, right in zip(self.gaps, self.gaps[1:], strict=False):
            if right.first <= left.last:
                raise ValueError(f"Tone gaps {left} and {right} overlap.")
        return self

    @classmethod
    def from_blocks(cls, missing: Iterable[tuple[int, int]] = (), interfered: Iterable[tuple[int, int]] = ()) -> Self:
        """Build a gap map from inclusive (first, last) index blocks."""
        gaps = [ToneGap(first=a, last=b, kind="missing") for a, b in missing]
        gaps += [ToneGap(first=a, last=b, kind="interfered") for a, b in interfered]
        return cls(gaps=gaps)

    @classmethod
    def from_preset(cls, name: str) -> Self:
        """Gap configuration `gap1`..`gap6`: the three missing blocks plus the preset's interfered blocks.

        :param name: The preset name.
        :raise ValueError: If the preset is unknown.
        :return: The gap map.
        """
        try:
            interfered = GAP_PRESETS[name]
        except KeyError:
            raise ValueError(f"Unknown gap preset {name!r}; expected one of {sorted(GAP_PRESETS)}.") from None
        return cls.from_blocks(MISSING_TONES, interfered)

    @classmethod
    def parse(cls, text: str) -> Self:
        """Parse `"0:2,24:26,!29:30,!32"`; a leading `!` marks an interfered block.

        Preset names are accepted as well.
        """
        text = text.strip()
        if text in GAP_PRESETS:
            return cls.from_preset(text)

        gaps = []
        for token in filter(None, (t.strip() for t in text.split(","))):
            kind: GapKind = "missing"
            if token.startswith("!"):
                kind, token = "interfered", token[1:]
            first, _, last = token.partition(":")
            try:
                gaps.append(ToneGap(first=int(first), last=int(last or first), kind=kind))
            except ValueError as e:
                raise ValueError(f"Invalid gap block {token!r}: {e}") from None
        return cls(gaps=gaps)

    def check_within(self, K: int) -> None:  # noqa: N803
        """Raise if any gap reaches beyond tone K - 1."""
        for gap in self.gaps:
            if gap.last >= K:
                raise ValueError(f"Tone gap {gap} lies outside the grid of {K} tones.")

    def mask(self, K: int, kind: GapKind | None = None) -> np.ndarray:  # noqa: N803
        """Boolean mask of the tones covered by gaps (of one kind, if given)."""
        self.check_within(K)
        mask = np.zeros(K, dtype=bool)
        for gap in self.gaps:
            if kind is None or gap.kind == kind:
                mask[gap.first : gap.last + 1] = True
        return mask


class IQCapture(ArrayModel):
    """Per-tone IQ measured at the initiator and the reflector, with availability flags."""

    iq_initiator: ComplexArray
    iq_reflector: ComplexArray
    available: BoolArray
    interfered: BoolArray
    grid: ToneGrid

    @model_validator(mode="after")
    def validate_lengths(self) -> Self:
        K = self.grid.K
        for name in ("iq_initiator", "iq_reflector", "available", "interfered"):
            if getattr(self, name).shape != (K,):
                raise ValueError(f"{name} must have length K={K}, got shape {getattr(self, name).shape}.")
        if np.any(self.interfered & self.available):
            raise ValueError("Interfered tones cannot be marked available.")
        return self


class TwoWayResponse(ArrayModel):
    """Squared channel h^2 per tone; entries outside `available` are zero."""

    h_sq: ComplexArray
    available: BoolArray
    grid: ToneGrid

    @model_validator(mode="after")
    def validate_lengths(self) -> Self:
        if self.h_sq.shape != (self.grid.K,) or self.available.shape != (self.grid.K,):
            raise ValueError(f"h_sq and available must have length K={self.grid.K}.")
        return self


class ToneBand(BaseModel):
    """Maximal run [a, b] of available tones."""

    model_config = ConfigDict(frozen=True)

    a: int = Field(..., ge=0, description="First tone index.")
    b: int = Field(..., ge=0, description="Last tone index (inclusive).")

    @property
    def length(self) -> int:
        return self.b - self.a + 1

    @property
    def index_slice(self) -> slice:
        return slice(self.a, self.b + 1)

    @model_validator(mode="after")
    def validate_order(self) -> Self:
        if self.a > self.b:
            raise ValueError(f"Band start {self.a} is after its end {self.b}.")
        return self


class ReconstructedChannel(ArrayModel):
    """Sign-resolved one-way channel, phase coherent within each band."""

    h_tilde: ComplexArray
    bands: list[ToneBand]


class EstimateDiagnostics(BaseModel):
    """How an estimate was obtained."""

    mode: str = Field(..., description="Estimator mode.")
    bands: list[ToneBand] = Field(default_factory=list, description="Bands that contributed a subspace.")
    skipped_bands: list[ToneBand] = Field(default_factory=list, description="Bands too short to contribute.")
    smoothing_factors: list[int] = Field(default_factory=list, description="Smoothing factor L per band.")
    signal_dims: list[int] = Field(default_factory=list, description="Signal subspace dimension per band.")
    peak_index: int = Field(..., description="Index of the chosen peak on the delay grid.")
    clamped: bool = Field(False, description="Whether the pseudospectrum denominator was clamped.")


class RangeEstimate(BaseModel):
    """Estimated LoS delay and the corresponding distance."""

    tau0_hat: float = Field(..., description="Estimated LoS delay in seconds.")
    distance_m: float = Field(..., ge=0, description="Estimated distance c * tau0_hat in meters.")
    diagnostics: EstimateDiagnostics

    @classmethod
    def from_delay(cls, tau0_hat: float, diagnostics: EstimateDiagnostics) -> Self:
        return cls(tau0_hat=tau0_hat, distance_m=SPEED_OF_LIGHT * tau0_hat, diagnostics=diagnostics)
