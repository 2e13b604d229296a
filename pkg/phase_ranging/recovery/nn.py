"""Tone-gap recovery with a bank of one-hidden-layer networks.

A width-W network maps the W tones before and the W tones after a gap to
the W tones inside it. Gaps touching the grid edge use an edge variant that
reads 2W tones on the one available side; the upper edge is mapped onto the
lower one by reversing and conjugating h^2, which keeps its form of a sum
of decaying complex exponentials.
"""

import logging
import math
import struct
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Literal, NamedTuple, Self

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, PrivateAttr, model_validator

from phase_ranging.channel import batch_response, db_to_linear, sample_sv_batch
from phase_ranging.constants import RealArray
from phase_ranging.exceptions import BankFormatError, DimensionError, UnrecoverableGapError
from phase_ranging.models import ArrayModel, GapMap, ToneGap, ToneGrid, TwoWayResponse
from phase_ranging.scheduler import neighbor_inputs, schedule_gaps

from .abstract import AbstractRecovery

__all__ = (
    "Variant",
    "Precision",
    "TrainingConfig",
    "NNParams",
    "NNModel",
    "NNBank",
    "Dataset",
    "AdamOptimizer",
    "bank_param_count",
    "sample_windows",
    "make_dataset",
    "loss_and_gradients",
    "train_model",
    "train_bank",
    "save_bank",
    "load_bank",
    "recover_window",
    "recover_gaps",
    "NNConfig",
    "NNRecovery",
)

logger = logging.getLogger(__name__)

Variant = Literal["interior", "edge"]
Precision = Literal["float32", "float64"]

STD_FLOOR = 1e-8
BANK_MAGIC = b"PRNB"
BANK_VERSION = 1
_HEADER = struct.Struct("<4sHHHBH")
_MODEL_HEADER = struct.Struct("<HBd")
_VARIANTS: tuple[Variant, ...] = ("interior", "edge")
PARAMETER_ORDER = (
    "weights_in",
    "bias_hidden",
    "weights_out",
    "bias_out",
    "in_mean",
    "in_std",
    "out_mean",
    "out_std",
)


class TrainingConfig(BaseModel):
    """Protocol for training the network bank."""

    model_config = ConfigDict(title="Network Training Settings")

    max_width: int = Field(10, ge=1, description="Widest gap T covered by the bank.")
    hidden: int = Field(20, ge=1, description="Hidden neurons H per network.")
    edge_variants: bool = Field(True, description="Also train one-sided models for gaps at the grid edges.")
    n_train: int = Field(100_000, ge=1, description="Training samples per network.")
    n_validation: int = Field(10_000, ge=1, description="Validation samples per network.")
    epochs: int = Field(50, ge=1)
    batch_size: int = Field(1000, ge=1)
    learning_rate: float = Field(1e-3, gt=0)
    beta1: float = Field(0.9, ge=0, lt=1)
    beta2: float = Field(0.999, ge=0, lt=1)
    epsilon: float = Field(1e-8, gt=0)
    snr_db_range: tuple[float, float] = Field((20.0, 30.0), description="SNR interval in dB.")
    tau0_range: tuple[float, float] = Field((1e-9, 30e-9), description="LoS delay interval in seconds.")
    ray_rate_inv_range: tuple[float, float] = Field((4e-9, 10e-9), description="1/lambda interval in seconds.")
    rician_db_range: tuple[float, float] = Field((-15.0, 15.0), description="Rician factor interval in dB.")
    rms_delay_spread: float = Field(22e-9, gt=0)
    num_paths_cap: int = Field(64, ge=1)
    horizon_factor: float = Field(10.0, gt=0)
    chunk_size: int = Field(5000, ge=1, description="Channels synthesized at once.")
    precision: Precision = Field("float64", description="Floating-point format of saved banks.")


class NNParams(NamedTuple):
    """Trainable parameters."""

    weights_in: np.ndarray
    bias_hidden: np.ndarray
    weights_out: np.ndarray
    bias_out: np.ndarray


class Dataset(NamedTuple):
    """Network inputs and targets after the per-sample complex normalization."""

    features: np.ndarray
    targets: np.ndarray
    scale: np.ndarray
    clean: np.ndarray


def bank_param_count(T: int, H: int) -> int:  # noqa: N803
    """Real values stored by an interior bank of widths 1..T: sum of 6Hi + (H + 2i) + 12i."""
    return sum(6 * H * i + (H + 2 * i) + 12 * i for i in range(1, T + 1))


def _features(ctx: np.ndarray) -> np.ndarray:
    half = ctx.shape[1] // 2
    return np.concatenate((ctx[:, :half].real, ctx[:, :half].imag, ctx[:, half:].real, ctx[:, half:].imag), axis=1)


def _targets(gap: np.ndarray) -> np.ndarray:
    return np.concatenate((gap.real, gap.imag), axis=1)


def _to_complex(y: np.ndarray) -> np.ndarray:
    half = y.shape[1] // 2
    return y[:, :half] + 1j * y[:, half:]


def _anchor(width: int, variant: Variant) -> int:
    """Context column adjacent to the gap."""
    return width - 1 if variant == "interior" else 0


def _context_scale(ctx: np.ndarray, anchor: int) -> np.ndarray:
    rms = np.sqrt(np.mean(np.abs(ctx) ** 2, axis=1))
    scale = rms * np.exp(1j * np.angle(ctx[:, anchor]))
    return np.where(rms > 0, scale, 1.0)


class NNModel(ArrayModel):
    """One-hidden-layer ReLU network for gaps of one width, with its standardization statistics."""

    width: int = Field(..., ge=1, description="Gap width W.")
    hidden: int = Field(..., ge=1, description="Hidden neurons H.")
    variant: Variant = Field("interior", description="Context on both sides or 2W tones on one side.")
    weights_in: RealArray
    bias_hidden: RealArray
    weights_out: RealArray
    bias_out: RealArray
    in_mean: RealArray
    in_std: RealArray
    out_mean: RealArray
    out_std: RealArray
    validation_nmse: float | None = Field(None, description="Normalized MSE on the validation set.")

    _calls: int = PrivateAttr(0)

    @property
    def input_dim(self) -> int:
        return 4 * self.width

    @property
    def output_dim(self) -> int:
        return 2 * self.width

    @property
    def param_count(self) -> int:
        return sum(getattr(self, name).size for name in PARAMETER_ORDER)

    @property
    def flops(self) -> int:
        """Real multiplications and additions of one forward pass, 12WH + 12W."""
        return 12 * self.width * self.hidden + 12 * self.width

    @property
    def flop_count(self) -> int:
        """Flops spent by all forward passes of this model so far."""
        return self._calls * self.flops

    @property
    def params(self) -> NNParams:
        return NNParams(self.weights_in, self.bias_hidden, self.weights_out, self.bias_out)

    @model_validator(mode="after")
    def validate_shapes(self) -> Self:
        d_in, d_out, h = self.input_dim, self.output_dim, self.hidden
        expected = {
            "weights_in": (h, d_in),
            "bias_hidden": (h,),
            "weights_out": (d_out, h),
            "bias_out": (d_out,),
            "in_mean": (d_in,),
            "in_std": (d_in,),
            "out_mean": (d_out,),
            "out_std": (d_out,),
        }
        for name, shape in expected.items():
            if getattr(self, name).shape != shape:
                raise ValueError(f"{name} must have shape {shape}, got {getattr(self, name).shape}.")
        if np.any(self.in_std <= 0) or np.any(self.out_std <= 0):
            raise ValueError("Standardization scales must be strictly positive.")
        return self

    @classmethod
    def initialize(cls, width: int, hidden: int, variant: Variant, rng: np.random.Generator) -> Self:
        """Glorot-uniform weights, zero biases and identity standardization."""
        d_in, d_out = 4 * width, 2 * width
        limit_in = math.sqrt(6.0 / (d_in + hidden))
        limit_out = math.sqrt(6.0 / (hidden + d_out))
        return cls(
            width=width,
            hidden=hidden,
            variant=variant,
            weights_in=rng.uniform(-limit_in, limit_in, size=(hidden, d_in)),
            bias_hidden=np.zeros(hidden),
            weights_out=rng.uniform(-limit_out, limit_out, size=(d_out, hidden)),
            bias_out=np.zeros(d_out),
            in_mean=np.zeros(d_in),
            in_std=np.ones(d_in),
            out_mean=np.zeros(d_out),
            out_std=np.ones(d_out),
        )

    def with_params(self, params: NNParams, **update: object) -> Self:
        return self.model_copy(update={**params._asdict(), **update})

    def standardize(self, x: np.ndarray) -> np.ndarray:
        return (x - self.in_mean) / self.in_std

    def destandardize(self, y: np.ndarray) -> np.ndarray:
        return y * self.out_std + self.out_mean

    def predict(self, x: np.ndarray) -> np.ndarray:
        """Raw features (n, 4W) to de-standardized outputs (n, 2W)."""
        x = np.atleast_2d(x)
        hidden = np.maximum(self.standardize(x) @ self.weights_in.T + self.bias_hidden, 0.0)
        self._calls += x.shape[0]
        return self.destandardize(hidden @ self.weights_out.T + self.bias_out)

    def predict_gap(self, ctx: np.ndarray) -> np.ndarray:
        """Gap tones from 2W context tones per row, in the model's own orientation and scale.

        :param ctx: Complex context of shape (n, 2W) or (2W,).
        :raise DimensionError: If the context length does not match the width.
        :return: Complex gap tones of shape (n, W) or (W,).
        """
        single = np.ndim(ctx) == 1
        ctx = np.atleast_2d(np.asarray(ctx, dtype=np.complex128))
        if ctx.shape[1] != 2 * self.width:
            raise DimensionError(f"Width-{self.width} model needs {2 * self.width} context tones, got {ctx.shape[1]}.")
        gap = _to_complex(self.predict(_features(ctx)))
        return gap[0] if single else gap

    def forward(self, h_sq_before: np.ndarray, h_sq_after: np.ndarray) -> np.ndarray:
        """The affine-ReLU map from the W tones before and the W tones after the gap to the W gap tones.

        Inputs are taken as they are; `recover_window` applies the context normalization the bank was trained with.
        """
        h_sq_before = np.asarray(h_sq_before, dtype=np.complex128)
        h_sq_after = np.asarray(h_sq_after, dtype=np.complex128)
        if h_sq_before.shape != (self.width,) or h_sq_after.shape != (self.width,):
            raise DimensionError(
                f"Width-{self.width} model needs {self.width} tones on each side, "
                f"got {h_sq_before.shape} and {h_sq_after.shape}."
            )
        return self.predict_gap(np.concatenate((h_sq_before, h_sq_after)))


def _normalized(model: NNModel, ctx: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    scale = _context_scale(ctx, _anchor(model.width, model.variant))[:, None]
    return ctx / scale, scale


def recover_window(model: NNModel, ctx: np.ndarray) -> np.ndarray:
    """Gap tones from raw context rows in the model's orientation.

    Each row is divided by its RMS magnitude and the phase of the tone next to
    the gap before the model sees it, and the output is scaled back.

    :param model: The model.
    :param ctx: Complex context of shape (n, 2W) or (2W,).
    :return: Complex gap tones of shape (n, W) or (W,).
    """
    single = np.ndim(ctx) == 1
    ctx, scale = _normalized(model, np.atleast_2d(np.asarray(ctx, dtype=np.complex128)))
    gap = model.predict_gap(ctx) * scale
    return gap[0] if single else gap


class NNBank(BaseModel):
    """Networks for every gap width 1..T, optionally with edge variants."""

    max_width: int = Field(..., ge=1, description="Widest covered gap T.")
    hidden: int = Field(..., ge=1, description="Hidden neurons H of every model.")
    models: list[NNModel] = Field(default_factory=list)

    @property
    def has_edge(self) -> bool:
        return any(m.variant == "edge" for m in self.models)

    @model_validator(mode="after")
    def validate_widths(self) -> Self:
        expected = list(range(1, self.max_width + 1))
        for variant in _VARIANTS:
            widths = sorted(m.width for m in self.models if m.variant == variant)
            if variant == "interior" and widths != expected:
                raise ValueError(f"Interior models must cover widths 1..{self.max_width}, got {widths}.")
            if variant == "edge" and widths and widths != expected:
                raise ValueError(f"Edge models must cover widths 1..{self.max_width}, got {widths}.")
        if any(m.hidden != self.hidden for m in self.models):
            raise ValueError(f"Every model must have {self.hidden} hidden neurons.")
        return self

    def model(self, width: int, variant: Variant = "interior") -> NNModel:
        """The model for one width and variant.

        :raise UnrecoverableGapError: If the bank has no such model.
        """
        for m in self.models:
            if m.width == width and m.variant == variant:
                return m
        raise UnrecoverableGapError(f"Bank has no {variant} model for gap width {width} (T={self.max_width}).")

    def param_count(self) -> int:
        """Real values stored by all models, edge variants included."""
        return sum(m.param_count for m in self.models)

    def storage_bytes(self, precision: Precision = "float32") -> int:
        return self.param_count() * np.dtype(precision).itemsize


def sample_windows(
    rng: np.random.Generator,
    n: int,
    length: int,
    cfg: TrainingConfig,
    grid: ToneGrid | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Noisy and clean h^2 over `length` consecutive tones of random channels.

    Channel parameters and SNR are drawn uniformly from the configured
    intervals and the window starts at a uniform tone offset.

    :return: Noisy and clean windows, both of shape (n, length).
    """
    grid = grid or ToneGrid()
    if length > grid.K:
        raise DimensionError(f"Window of {length} tones does not fit a grid of {grid.K}.")

    noisy = np.empty((n, length), dtype=np.complex128)
    clean = np.empty((n, length), dtype=np.complex128)
    for start in range(0, n, cfg.chunk_size):
        m = min(cfg.chunk_size, n - start)
        tau0 = rng.uniform(*cfg.tau0_range, size=m)
        ray_rate_inv = rng.uniform(*cfg.ray_rate_inv_range, size=m)
        rician_db = rng.uniform(*cfg.rician_db_range, size=m)
        snr_db = rng.uniform(*cfg.snr_db_range, size=m)
        amplitudes, delays = sample_sv_batch(
            rng,
            tau0,
            ray_rate_inv,
            rician_db,
            cfg.rms_delay_spread,
            cfg.num_paths_cap,
            cfg.horizon_factor,
        )
        offsets = rng.integers(0, grid.K - length + 1, size=m)
        freqs = grid.f0 + (offsets[:, None] + np.arange(length)) * grid.delta_f
        h = batch_response(amplitudes, delays, freqs)

        paths = np.count_nonzero(amplitudes, axis=1)
        n0 = np.sum(np.abs(amplitudes) ** 2, axis=1) / paths / db_to_linear(snr_db)
        sigma = np.sqrt(n0 / 2.0)[:, None]
        rotation = np.exp(-1j * rng.uniform(0.0, 2 * np.pi, size=(m, length)))
        iq_initiator = rotation * h + sigma * (rng.standard_normal((m, length)) + 1j * rng.standard_normal((m, length)))
        iq_reflector = rotation.conj() * h + sigma * (
            rng.standard_normal((m, length)) + 1j * rng.standard_normal((m, length))
        )
        noisy[start : start + m] = iq_initiator * iq_reflector
        clean[start : start + m] = h**2
    return noisy, clean


def _split_window(noisy: np.ndarray, clean: np.ndarray, width: int, variant: Variant) -> tuple[np.ndarray, np.ndarray]:
    if variant == "interior":
        ctx = np.concatenate((noisy[:, :width], noisy[:, 2 * width : 3 * width]), axis=1)
        return ctx, clean[:, width : 2 * width]
    return noisy[:, width : 3 * width], clean[:, :width]


def make_dataset(
    width: int,
    variant: Variant,
    n: int,
    cfg: TrainingConfig,
    rng: np.random.Generator,
    grid: ToneGrid | None = None,
) -> Dataset:
    """Samples for one width: the gap sits between (interior) or before (edge) its context."""
    noisy, clean = sample_windows(rng, n, 3 * width, cfg, grid)
    ctx, gap = _split_window(noisy, clean, width, variant)
    scale = _context_scale(ctx, _anchor(width, variant))[:, None]
    return Dataset(features=_features(ctx / scale), targets=_targets(gap / scale), scale=scale, clean=gap)


def loss_and_gradients(params: NNParams, x: np.ndarray, y: np.ndarray) -> tuple[float, NNParams]:
    """Mean squared error over all outputs of a batch and its gradients.

    :param params: The trainable parameters.
    :param x: Standardized inputs (n, 4W).
    :param y: Standardized targets (n, 2W).
    :return: The loss and its gradient per parameter.
    """
    pre = x @ params.weights_in.T + params.bias_hidden
    hidden = np.maximum(pre, 0.0)
    diff = hidden @ params.weights_out.T + params.bias_out - y
    loss = float(np.mean(diff**2))

    d_out = 2.0 * diff / diff.size
    d_pre = (d_out @ params.weights_out) * (pre > 0)
    return loss, NNParams(
        weights_in=d_pre.T @ x,
        bias_hidden=d_pre.sum(axis=0),
        weights_out=d_out.T @ hidden,
        bias_out=d_out.sum(axis=0),
    )


class AdamOptimizer:
    """Adam with bias-corrected moment estimates."""

    def __init__(self, params: NNParams, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.steps = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params: NNParams, grads: NNParams) -> NNParams:
        self.steps += 1
        correction1 = 1.0 - self.beta1**self.steps
        correction2 = 1.0 - self.beta2**self.steps
        updated = []
        for i, (p, g) in enumerate(zip(params, grads, strict=True)):
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g**2
            m_hat = self.m[i] / correction1
            v_hat = self.v[i] / correction2
            updated.append(p - self.lr * m_hat / (np.sqrt(v_hat) + self.eps))
        return NNParams(*updated)


def _nmse(model: NNModel, data: Dataset) -> float:
    predicted = _to_complex(model.predict(data.features)) * data.scale
    return float(np.sum(np.abs(predicted - data.clean) ** 2) / np.sum(np.abs(data.clean) ** 2))


def train_model(
    width: int,
    variant: Variant,
    cfg: TrainingConfig,
    rng: np.random.Generator,
    grid: ToneGrid | None = None,
) -> NNModel:
    """Train one network on fresh synthetic data.

    :param width: The gap width W.
    :param variant: Interior or edge.
    :param cfg: The training protocol.
    :param rng: The random generator for data, initialization and shuffling.
    :param grid: The tone grid the channels are evaluated on.
    :return: The trained model with its validation NMSE.
    """
    train = make_dataset(width, variant, cfg.n_train, cfg, rng, grid)
    validation = make_dataset(width, variant, cfg.n_validation, cfg, rng, grid)

    model = NNModel.initialize(width, cfg.hidden, variant, rng).model_copy(
        update={
            "in_mean": train.features.mean(axis=0),
            "in_std": np.maximum(train.features.std(axis=0), STD_FLOOR),
            "out_mean": train.targets.mean(axis=0),
            "out_std": np.maximum(train.targets.std(axis=0), STD_FLOOR),
        }
    )
    x = model.standardize(train.features)
    y = (train.targets - model.out_mean) / model.out_std

    params = model.params
    optimizer = AdamOptimizer(params, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon)
    loss = math.nan
    for _ in range(cfg.epochs):
        order = rng.permutation(x.shape[0])
        for start in range(0, x.shape[0], cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            loss, grads = loss_and_gradients(params, x[batch], y[batch])
            params = optimizer.step(params, grads)

    model = model.with_params(params)
    model = model.model_copy(update={"validation_nmse": _nmse(model, validation)})
    logger.info(
        "Trained %s model W=%d: last batch loss %.4g, validation NMSE %.4g",
        variant,
        width,
        loss,
        model.validation_nmse,
    )
    return model


def _train_job(job: tuple[int, Variant, TrainingConfig, np.random.SeedSequence, ToneGrid | None]) -> NNModel:
    width, variant, cfg, seed, grid = job
    return train_model(width, variant, cfg, np.random.default_rng(seed), grid)


def train_bank(cfg: TrainingConfig, rng_seed: int, grid: ToneGrid | None = None, workers: int = 1) -> NNBank:
    """Train every model of a bank; each model draws from its own child seed.

    :param cfg: The training protocol.
    :param rng_seed: The root seed; equal seeds give identical banks.
    :param grid: The tone grid.
    :param workers: Processes to train models in parallel.
    :return: The bank.
    """
    variants: tuple[Variant, ...] = _VARIANTS if cfg.edge_variants else ("interior",)
    keys = [(w, v) for v in variants for w in range(1, cfg.max_width + 1)]
    seeds = np.random.SeedSequence(rng_seed).spawn(len(keys))
    jobs = [(w, v, cfg, seed, grid) for (w, v), seed in zip(keys, seeds, strict=True)]

    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            models = list(executor.map(_train_job, jobs))
    else:
        models = [_train_job(job) for job in jobs]
    return NNBank(max_width=cfg.max_width, hidden=cfg.hidden, models=models)


def save_bank(bank: NNBank, path: Path, precision: Precision = "float64") -> None:
    """Write the bank: versioned header, then per model its width, variant and parameters, little-endian."""
    dtype = np.dtype(precision).newbyteorder("<")
    chunks = [_HEADER.pack(BANK_MAGIC, BANK_VERSION, bank.max_width, bank.hidden, dtype.itemsize, len(bank.models))]
    for model in bank.models:
        nmse = math.nan if model.validation_nmse is None else model.validation_nmse
        chunks.append(_MODEL_HEADER.pack(model.width, _VARIANTS.index(model.variant), nmse))
        chunks += [np.ascontiguousarray(getattr(model, name), dtype=dtype).tobytes() for name in PARAMETER_ORDER]
    Path(path).write_bytes(b"".join(chunks))


def load_bank(path: Path) -> NNBank:
    """Read a bank written by `save_bank`.

    :raise BankFormatError: If the file is truncated, has a wrong magic or version, or holds inconsistent models.
    """
    data = Path(path).read_bytes()
    try:
        magic, version, max_width, hidden, itemsize, n_models = _HEADER.unpack_from(data, 0)
    except struct.error:
        raise BankFormatError(f"{path}: truncated header.") from None
    if magic != BANK_MAGIC:
        raise BankFormatError(f"{path}: not a model bank (magic {magic!r}).")
    if version != BANK_VERSION:
        raise BankFormatError(f"{path}: unsupported bank version {version}.")
    if itemsize not in (4, 8):
        raise BankFormatError(f"{path}: unsupported precision of {itemsize} bytes.")
    dtype = np.dtype(f"<f{itemsize}")

    offset = _HEADER.size
    models = []
    for _ in range(n_models):
        try:
            width, variant_code, nmse = _MODEL_HEADER.unpack_from(data, offset)
        except struct.error:
            raise BankFormatError(f"{path}: truncated model header.") from None
        if variant_code >= len(_VARIANTS) or width < 1:
            raise BankFormatError(f"{path}: invalid model header (width {width}, variant {variant_code}).")
        offset += _MODEL_HEADER.size

        shapes = {
            "weights_in": (hidden, 4 * width),
            "bias_hidden": (hidden,),
            "weights_out": (2 * width, hidden),
            "bias_out": (2 * width,),
            "in_mean": (4 * width,),
            "in_std": (4 * width,),
            "out_mean": (2 * width,),
            "out_std": (2 * width,),
        }
        arrays = {}
        for name in PARAMETER_ORDER:
            count = math.prod(shapes[name])
            if offset + count * itemsize > len(data):
                raise BankFormatError(f"{path}: truncated parameters of width-{width} model.")
            arrays[name] = np.frombuffer(data, dtype=dtype, count=count, offset=offset).astype(np.float64)
            arrays[name] = arrays[name].reshape(shapes[name])
            offset += count * itemsize
        try:
            models.append(
                NNModel(
                    width=width,
                    hidden=hidden,
                    variant=_VARIANTS[variant_code],
                    validation_nmse=None if math.isnan(nmse) else nmse,
                    **arrays,
                )
            )
        except ValueError as e:
            raise BankFormatError(f"{path}: {e}") from None

    if offset != len(data):
        raise BankFormatError(f"{path}: {len(data) - offset} trailing bytes.")
    try:
        return NNBank(max_width=max_width, hidden=hidden, models=models)
    except ValueError as e:
        raise BankFormatError(f"{path}: {e}") from None


class _Plan(NamedTuple):
    gap: ToneGap
    variant: Variant
    side: Literal["both", "after", "before"]
    inputs: np.ndarray


def _plan(gap: ToneGap, K: int, bank: NNBank) -> _Plan | None:  # noqa: N803
    w = gap.width
    if w > bank.max_width:
        return None
    if gap.first - w >= 0 and gap.last + w <= K - 1:
        return _Plan(gap, "interior", "both", neighbor_inputs(gap, w, K))
    if not bank.has_edge:
        return None
    if gap.last + 2 * w <= K - 1 and gap.first - w < 0:
        return _Plan(gap, "edge", "after", np.arange(gap.last + 1, gap.last + 1 + 2 * w))
    if gap.first - 2 * w >= 0:
        return _Plan(gap, "edge", "before", np.arange(gap.first - 2 * w, gap.first))
    if gap.last + 2 * w <= K - 1:
        return _Plan(gap, "edge", "after", np.arange(gap.last + 1, gap.last + 1 + 2 * w))
    return None


def _fill(h: np.ndarray, plan: _Plan, model: NNModel) -> np.ndarray:
    if plan.side == "both":
        ctx, scale = _normalized(model, h[plan.inputs][None, :])
        return model.forward(ctx[0, : model.width], ctx[0, model.width :]) * scale[0]
    if plan.side == "before":
        # Reverse and conjugate so the context follows the gap, as in training.
        return recover_window(model, h[plan.inputs][::-1].conj()).conj()[::-1]
    return recover_window(model, h[plan.inputs])


def recover_gaps(
    h_sq: TwoWayResponse,
    gap_map: GapMap,
    bank: NNBank,
    schedule: bool = True,
    strict: bool = False,
) -> TwoWayResponse:
    """Fill the gaps of a two-way response with the bank's networks.

    Gaps are processed in scheduled order and recovered tones feed later
    gaps. Inputs that are still unavailable are zero.

    :param h_sq: The two-way response.
    :param gap_map: The gaps to fill.
    :param bank: The network bank.
    :param schedule: Order the gaps with the scheduler; left to right otherwise.
    :param strict: Raise on a gap the bank cannot recover instead of leaving it unavailable.
    :raise UnrecoverableGapError: In strict mode, if a gap is wider than T or has no room for its context.
    :return: The response with every recoverable gap filled and marked available.
    """
    if not gap_map.gaps:
        return h_sq
    K = h_sq.grid.K  # noqa: N806
    gap_map.check_within(K)

    h = np.where(h_sq.available, h_sq.h_sq, 0.0)
    available = h_sq.available.copy()

    plans = []
    for gap in gap_map.gaps:
        plan = _plan(gap, K, bank)
        if plan is None:
            message = f"Gap {gap} of width {gap.width} cannot be recovered with a bank of T={bank.max_width}."
            if strict:
                raise UnrecoverableGapError(message)
            logger.warning(message)
            continue
        plans.append(plan)

    by_gap = {plan.gap: plan for plan in plans}
    if schedule:
        order = schedule_gaps(
            GapMap(gaps=[p.gap for p in plans]),
            available,
            inputs=[p.inputs for p in sorted(plans, key=lambda p: p.gap.first)],
        ).order
    else:
        order = [p.gap for p in plans]

    for gap in order:
        plan = by_gap[gap]
        h[gap.first : gap.last + 1] = _fill(h, plan, bank.model(gap.width, plan.variant))
        available[gap.first : gap.last + 1] = True
    return TwoWayResponse(h_sq=h, available=available, grid=h_sq.grid)


class NNConfig(BaseModel):
    """Settings of the network-bank recovery."""

    model_config = ConfigDict(title="Recovery: Neural Network Settings")

    bank_path: Path | None = Field(None, description="Model-bank file written by `train-nn`.")
    schedule: bool = Field(True, description="Order gaps with the scheduler; left to right otherwise.")
    strict: bool = Field(False, description="Fail on gaps the bank cannot recover.")


class NNRecovery(AbstractRecovery[NNConfig]):
    """Fill tone gaps with a trained network bank."""

    name = "nn"
    config = NNConfig

    def __init__(self, recovery_config: NNConfig | None = None, bank: NNBank | None = None) -> None:
        super().__init__(recovery_config)
        self._bank = bank

    @property
    def bank(self) -> NNBank:
        """The bank passed in, or the one loaded from `bank_path`.

        :raise FileNotFoundError: If no bank was given and `bank_path` is unset or missing.
        """
        if self._bank is None:
            path = self.recovery_config.bank_path
            if path is None or not Path(path).is_file():
                raise FileNotFoundError(f"Model bank not found: {path}")
            self._bank = load_bank(path)
        return self._bank

    def recover(self, resp: TwoWayResponse, gaps: GapMap) -> TwoWayResponse:
        return recover_gaps(
            resp,
            gaps,
            self.bank,
            schedule=self.recovery_config.schedule,
            strict=self.recovery_config.strict,
        )
