import argparse
import math
import sys
from collections.abc import Sequence
from typing import Any

from pydantic_core import ValidationError

__all__ = (
    "make_pretty_md_table",
    "make_pretty_md_table_from_dict",
    "format_meters",
    "CommaListAction",
    "describe_validation_error",
)


def _is_numeric(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return cell == "n/a"
    return True


def _md_row(cells: Sequence[str], widths: Sequence[int], right: Sequence[bool]) -> str:
    padded = (c.rjust(w) if r else c.ljust(w) for c, w, r in zip(cells, widths, right, strict=True))
    return "| " + " | ".join(padded) + " |"


def make_pretty_md_table(header: list[str], rows: list[list[str]]) -> str:
    """Make a Markdown table with padded columns.

    Columns holding only numbers (or `n/a`) are right-aligned.

    :param header: The header of the table.
    :param rows: The rows of the table.
    :return: The Markdown table, without a trailing newline.
    """
    widths = [max([len(h), *(len(row[i]) for row in rows)]) for i, h in enumerate(header)]
    right = [bool(rows) and all(_is_numeric(row[i]) for row in rows) for i in range(len(header))]
    rule = "|" + "|".join("-" * (w + 1) + (":" if r else "-") for w, r in zip(widths, right, strict=True)) + "|"
    lines = [_md_row(header, widths, [False] * len(header)), rule]
    lines += [_md_row(row, widths, right) for row in rows]
    return "\n".join(lines)


def make_pretty_md_table_from_dict(data: list[dict[str, str]]) -> str:
    """Make a Markdown table from rows given as dictionaries; columns follow first appearance."""
    header = list(dict.fromkeys(key for row in data for key in row))
    return make_pretty_md_table(header, [[row.get(key, "") for key in header] for row in data])


def format_meters(value: float) -> str:
    """Meters with millimeter resolution; NaN renders as `n/a`."""
    if math.isnan(value):
        return "n/a"
    return f"{value:.3f}"


class CommaListAction(argparse.Action):
    """Collect comma-separated values, validated against `allowed`, across repeated options."""

    def __init__(self, option_strings: Sequence[str], dest: str, allowed: Sequence[str] | None = None, **kwargs: Any):
        super().__init__(option_strings, dest, **kwargs)
        self.allowed = allowed

    def __call__(
        self,
        parser: argparse.ArgumentParser,
        namespace: argparse.Namespace,
        values: str | Sequence[Any] | None,
        option_string: str | None = None,
    ) -> None:
        """Split and append the values."""
        if values is None:
            return
        if isinstance(values, str):
            values = [values]

        result = getattr(namespace, self.dest, None) or []

        # Reset the default value
        if result == self.default:
            result = []

        for value in values:
            for item in filter(None, (v.strip() for v in str(value).split(","))):
                if self.allowed is not None and item not in self.allowed:
                    parser.print_usage(sys.stderr)
                    choices = ", ".join(self.allowed)
                    message = f"{option_string}: invalid choice {item!r} (choose from {choices})"
                    parser.exit(2, f"{parser.prog}: error: {message}\n")
                result.append(item)

        setattr(namespace, self.dest, result)


def describe_validation_error(err: ValidationError, settings_path: str = "ExperimentConfig") -> str:
    """Render a validation error as one bullet per offending setting."""
    lines = "\n".join(
        f"  - `{settings_path}.{'.'.join(map(str, details['loc']))}`: {details['msg']}"
        #
        for details in err.errors()
    )
    return f"You have {err.error_count()} invalid settings:\n{lines}"
