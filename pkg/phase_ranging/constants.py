from pathlib import Path
from typing import Annotated

import numpy as np
from pydantic import BeforeValidator

__all__ = (
    "SPEED_OF_LIGHT",
    "StrAsPath",
    "ComplexArray",
    "RealArray",
    "BoolArray",
    "MISSING_TONES",
    "GAP_PRESETS",
)

SPEED_OF_LIGHT = 299_792_458.0

StrAsPath = Annotated[Path, BeforeValidator(lambda v: Path(v))]

ComplexArray = Annotated[np.ndarray, BeforeValidator(lambda v: np.asarray(v, dtype=np.complex128))]
RealArray = Annotated[np.ndarray, BeforeValidator(lambda v: np.asarray(v, dtype=np.float64))]
BoolArray = Annotated[np.ndarray, BeforeValidator(lambda v: np.asarray(v, dtype=bool))]

# Inclusive (first, last) tone index blocks on the 80-tone 2.401-2.480 GHz grid.
MISSING_TONES: tuple[tuple[int, int], ...] = ((0, 2), (78, 79), (24, 26))

GAP_PRESETS: dict[str, tuple[tuple[int, int], ...]] = {
    "gap1": (),
    "gap2": ((27, 29),),
    "gap3": ((59, 61),),
    "gap4": ((59, 67),),
    "gap5": (
        (29, 30),
        (32, 32),
        (34, 36),
        (38, 38),
        (52, 55),
        (58, 59),
        (62, 63),
        (65, 65),
    ),
    "gap6": (
        (12, 13),
        (37, 39),
        (40, 41),
        (53, 55),
        (61, 64),
        (70, 72),
    ),
}
"""Interfered blocks of each preset; every preset also carries `MISSING_TONES`."""
