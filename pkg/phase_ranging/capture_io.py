"""Line-oriented text format for IQ captures.

    # comment
    f0_hz=2401000000
    delta_f_hz=1000000
    K=80
    0,1,0,<re_I>,<im_I>,<re_R>,<im_R>
    ...

One record per tone in index order: index, available (0/1), interfered
(0/1) and the initiator and reflector IQ.
"""

from pathlib import Path

import numpy as np
from pydantic import ValidationError

from phase_ranging.exceptions import CaptureFormatError
from phase_ranging.models import IQCapture, ToneGrid

__all__ = (
    "format_capture",
    "parse_capture",
    "write_capture",
    "read_capture",
)

_HEADER_KEYS = {"f0_hz": "f0", "delta_f_hz": "delta_f", "K": "K"}


def format_capture(capture: IQCapture) -> str:
    """Render a capture; floats use 17 significant digits so they read back exactly."""
    grid = capture.grid
    lines = [f"f0_hz={grid.f0:.17g}", f"delta_f_hz={grid.delta_f:.17g}", f"K={grid.K}"]
    for k in range(grid.K):
        iq_i, iq_r = capture.iq_initiator[k], capture.iq_reflector[k]
        lines.append(
            f"{k},{int(capture.available[k])},{int(capture.interfered[k])},"
            f"{iq_i.real:.17g},{iq_i.imag:.17g},{iq_r.real:.17g},{iq_r.imag:.17g}"
        )
    return "\n".join(lines) + "\n"


def _flag(value: str, line_no: int) -> bool:
    if value not in ("0", "1"):
        raise CaptureFormatError(f"flag must be 0 or 1, got {value!r}", line_no)
    return value == "1"


def parse_capture(text: str) -> IQCapture:  # noqa: C901
    """Parse the capture format.

    :param text: The file content.
    :raise CaptureFormatError: On a malformed line, a missing header key, a
        record out of order or a record count different from K.
    :return: The capture.
    """
    header: dict[str, float | int] = {}
    records: list[tuple[bool, bool, complex, complex]] = []
    last_line = 0

    for line_no, raw in enumerate(text.splitlines(), start=1):
        last_line = line_no
        line = raw.strip()
        if not line or line.startswith("#"):
            continue

        if "=" in line:
            key, _, value = (part.strip() for part in line.partition("="))
            if key not in _HEADER_KEYS:
                raise CaptureFormatError(f"unknown header key {key!r}", line_no)
            if records:
                raise CaptureFormatError(f"header key {key!r} after the first record", line_no)
            try:
                header[_HEADER_KEYS[key]] = int(value) if key == "K" else float(value)
            except ValueError:
                raise CaptureFormatError(f"invalid value {value!r} for {key}", line_no) from None
            continue

        fields = [f.strip() for f in line.split(",")]
        if len(fields) != 7:
            raise CaptureFormatError(f"expected 7 comma-separated fields, got {len(fields)}", line_no)
        try:
            index = int(fields[0])
            re_i, im_i, re_r, im_r = (float(f) for f in fields[3:])
        except ValueError as e:
            raise CaptureFormatError(f"invalid number: {e}", line_no) from None
        if index != len(records):
            raise CaptureFormatError(f"expected tone index {len(records)}, got {index}", line_no)
        records.append((_flag(fields[1], line_no), _flag(fields[2], line_no), complex(re_i, im_i), complex(re_r, im_r)))

    missing = [key for key, name in _HEADER_KEYS.items() if name not in header]
    if missing:
        raise CaptureFormatError(f"missing header key(s) {', '.join(missing)}", last_line)
    try:
        grid = ToneGrid(**header)
    except ValidationError as e:
        raise CaptureFormatError(f"invalid grid: {e}", last_line) from None
    if len(records) != grid.K:
        raise CaptureFormatError(f"header declares K={grid.K} tones but {len(records)} records follow", last_line)

    available, interfered, iq_initiator, iq_reflector = zip(*records, strict=True) if records else ((), (), (), ())
    try:
        return IQCapture(
            iq_initiator=np.array(iq_initiator, dtype=np.complex128),
            iq_reflector=np.array(iq_reflector, dtype=np.complex128),
            available=np.array(available, dtype=bool),
            interfered=np.array(interfered, dtype=bool),
            grid=grid,
        )
    except ValidationError as e:
        raise CaptureFormatError(f"inconsistent capture: {e}", last_line) from None


def write_capture(capture: IQCapture, path: Path) -> None:
    Path(path).write_text(format_capture(capture))


def read_capture(path: Path) -> IQCapture:
    return parse_capture(Path(path).read_text())
